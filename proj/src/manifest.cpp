#include "wxgen/manifest.hpp"

#include "wxgen/ioutil.hpp"

namespace wxgen {

void RunManifest::add_config(const std::string& key, const std::string& value) {
    config.emplace_back(key, value);
}

void RunManifest::add_input(const std::filesystem::path& path) {
    inputs.emplace_back(path.string(), file_digest_hex(path));
}

void RunManifest::add_output(const std::filesystem::path& path) {
    outputs.emplace_back(path.string(), file_digest_hex(path));
}

std::string RunManifest::to_text() const {
    std::string out = "subcommand=" + subcommand + "\n";
    for (const auto& [k, v] : config) out += "config." + k + "=" + v + "\n";
    for (const auto& [p, d] : inputs) out += "input." + p + "=" + d + "\n";
    for (const auto& [p, d] : outputs) out += "output." + p + "=" + d + "\n";
    out += "wall_seconds=" + format_double(wall_seconds) + "\n";
    return out;
}

void write_manifests(const RunManifest& m) {
    const std::string text = m.to_text();
    for (const auto& [path, digest] : m.outputs)
        write_file_atomic(std::filesystem::path(path + ".manifest"), text);
}

}  // namespace wxgen
