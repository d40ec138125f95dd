#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace wxgen {

// Record of one CLI run: the resolved value of every knob plus digests of the
// files read and written. Re-running the subcommand with these values must
// reproduce the outputs bitwise (modulo the wall-clock line).
struct RunManifest {
    std::string subcommand;
    std::vector<std::pair<std::string, std::string>> config;   // knob -> resolved value
    std::vector<std::pair<std::string, std::string>> inputs;   // path -> fnv1a64 digest
    std::vector<std::pair<std::string, std::string>> outputs;  // path -> fnv1a64 digest
    double wall_seconds = 0.0;

    void add_config(const std::string& key, const std::string& value);
    void add_input(const std::filesystem::path& path);   // digests the file now
    void add_output(const std::filesystem::path& path);  // digests the file now

    std::string to_text() const;
};

// Writes "<output>.manifest" atomically next to every recorded output.
void write_manifests(const RunManifest& m);

}  // namespace wxgen
