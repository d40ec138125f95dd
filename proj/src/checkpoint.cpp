#include "wxgen/checkpoint.hpp"

#include <charconv>
#include <cstdlib>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "wxgen/error.hpp"
#include "wxgen/ioutil.hpp"
#include "wxgen/tensor.hpp"

namespace wxgen {

namespace {

constexpr char kMagic[] = "WXVAE001";  // 8 bytes, no terminator written

std::string shape_text(const std::vector<size_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

std::string config_block(const Checkpoint& cp) {
    std::string b;
    auto put = [&](const std::string& key, const std::string& value) {
        b += key + "=" + value + "\n";
    };
    auto put_sz = [&](const std::string& key, size_t v) { put(key, std::to_string(v)); };
    auto put_d = [&](const std::string& key, double v) { put(key, format_double(v)); };
    auto put_b = [&](const std::string& key, bool v) { put(key, v ? "1" : "0"); };

    const ModelConfig& m = cp.model;
    put_sz("model.input_t", m.input_t);
    put_sz("model.input_h", m.input_h);
    put_sz("model.input_w", m.input_w);
    put_sz("model.conv_channels", m.conv_channels);
    put_sz("model.bottleneck_width", m.bottleneck_width);
    put_sz("model.latent_dim", m.latent_dim);
    put_sz("model.decoder_channels", m.decoder_channels);
    put("model.output_activation", to_string(m.output_activation));

    const TrainConfig& t = cp.train;
    put_sz("train.epochs", t.epochs);
    put_sz("train.batch_size", t.batch_size);
    put_d("train.lr", t.lr);
    put_d("train.adam_beta1", t.adam_beta1);
    put_d("train.adam_beta2", t.adam_beta2);
    put_d("train.adam_eps", t.adam_eps);
    put_sz("train.warmup_epochs", t.warmup_epochs);
    put_b("train.warmup_ramp", t.warmup_ramp);
    put_d("train.beta_target", t.beta_target);
    put_sz("train.early_stop_patience", t.early_stop_patience);
    put_d("train.early_stop_min_delta", t.early_stop_min_delta);
    put("train.seed", std::to_string(t.seed));
    put_d("train.validation_fraction", t.validation_fraction);
    put_b("train.grad_clip", t.grad_clip);
    put_d("train.grad_clip_norm", t.grad_clip_norm);

    put("norm.transform", cp.norm.transform);
    put_d("norm.scale", cp.norm.scale);
    return b;
}

// Parsed key=value lines; every key must be consumed exactly once.
class ConfigMap {
public:
    ConfigMap(const std::string& block, std::string source) : source_(std::move(source)) {
        size_t pos = 0;
        while (pos < block.size()) {
            size_t end = block.find('\n', pos);
            if (end == std::string::npos) end = block.size();
            std::string line = block.substr(pos, end - pos);
            pos = end + 1;
            if (line.empty()) continue;
            size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw IoError(source_ + ": malformed checkpoint config line '" + line + "'");
            std::string key = line.substr(0, eq);
            if (!kv_.emplace(key, line.substr(eq + 1)).second)
                throw IoError(source_ + ": duplicate checkpoint config key '" + key + "'");
        }
    }

    std::string take(const std::string& key) {
        auto it = kv_.find(key);
        if (it == kv_.end())
            throw IoError(source_ + ": missing checkpoint config key '" + key + "'");
        std::string v = std::move(it->second);
        kv_.erase(it);
        return v;
    }

    size_t take_size(const std::string& key) { return parse_unsigned(key, take(key)); }
    uint64_t take_u64(const std::string& key) {
        return static_cast<uint64_t>(parse_unsigned(key, take(key)));
    }

    double take_double(const std::string& key) {
        std::string v = take(key);
        char* end = nullptr;
        double d = std::strtod(v.c_str(), &end);
        if (end != v.c_str() + v.size() || v.empty())
            throw IoError(source_ + ": checkpoint config key '" + key + "' has non-numeric value '" +
                          v + "'");
        return d;
    }

    bool take_bool(const std::string& key) {
        std::string v = take(key);
        if (v == "0") return false;
        if (v == "1") return true;
        throw IoError(source_ + ": checkpoint config key '" + key + "' must be 0 or 1, got '" + v +
                      "'");
    }

    void expect_empty() const {
        if (!kv_.empty())
            throw IoError(source_ + ": unknown checkpoint config key '" + kv_.begin()->first + "'");
    }

private:
    uint64_t parse_unsigned(const std::string& key, const std::string& v) {
        uint64_t out = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || p != v.data() + v.size())
            throw IoError(source_ + ": checkpoint config key '" + key +
                          "' has non-integer value '" + v + "'");
        return out;
    }

    std::map<std::string, std::string> kv_;
    std::string source_;
};

}  // namespace

namespace {

std::vector<std::byte> checkpoint_bytes(const Checkpoint& cp) {
    cp.model.validate();
    cp.train.validate();
    if (!(cp.norm.scale >= 0.0))
        throw ValidationError("checkpoint norm.scale must be non-negative (0 = no stats)");

    const auto expected = param_shapes(cp.model);
    const auto named = cp.params.named();
    size_t payload = 0;
    for (size_t i = 0; i < named.size(); ++i) {
        const auto& [name, t] = named[i];
        if (!t->defined() || t->shape() != expected[i].second)
            throw ValidationError("checkpoint parameter '" + name + "' has shape " +
                                  (t->defined() ? shape_text(t->shape()) : "(undefined)") +
                                  " but the model config requires " +
                                  shape_text(expected[i].second));
        payload += 4 + name.size() + 4 + 4 * t->shape().size() + 4 * t->size();
    }

    const std::string block = config_block(cp);
    std::vector<std::byte> bytes;
    bytes.reserve(8 + 4 + block.size() + payload);
    put_bytes(bytes, kMagic, 8);
    put_u32(bytes, static_cast<uint32_t>(block.size()));
    put_bytes(bytes, block.data(), block.size());

    std::vector<float> scratch;
    for (const auto& [name, t] : named) {
        put_u32(bytes, static_cast<uint32_t>(name.size()));
        put_bytes(bytes, name.data(), name.size());
        put_u32(bytes, static_cast<uint32_t>(t->shape().size()));
        for (size_t d : t->shape()) put_u32(bytes, static_cast<uint32_t>(d));
        scratch.resize(t->size());
        const auto& data = t->data();
        for (size_t j = 0; j < data.size(); ++j) scratch[j] = static_cast<float>(data[j]);
        put_bytes(bytes, scratch.data(), 4 * scratch.size());
    }
    return bytes;
}

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
    write_file_atomic(path, checkpoint_bytes(cp));
}

std::string checkpoint_digest(const Checkpoint& cp) { return fnv1a64_hex(checkpoint_bytes(cp)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::vector<std::byte> bytes = read_file_bytes(path);
    ByteReader r(bytes, path.string());
    if (r.remaining() < 8 || r.str(8) != kMagic)
        throw IoError(path.string() + ": not a checkpoint (bad magic)");

    ConfigMap cfg(r.str(r.u32()), path.string());
    Checkpoint cp;
    cp.model.input_t = cfg.take_size("model.input_t");
    cp.model.input_h = cfg.take_size("model.input_h");
    cp.model.input_w = cfg.take_size("model.input_w");
    cp.model.conv_channels = cfg.take_size("model.conv_channels");
    cp.model.bottleneck_width = cfg.take_size("model.bottleneck_width");
    cp.model.latent_dim = cfg.take_size("model.latent_dim");
    cp.model.decoder_channels = cfg.take_size("model.decoder_channels");
    cp.model.output_activation = output_activation_from_string(cfg.take("model.output_activation"));
    cp.train.epochs = cfg.take_size("train.epochs");
    cp.train.batch_size = cfg.take_size("train.batch_size");
    cp.train.lr = cfg.take_double("train.lr");
    cp.train.adam_beta1 = cfg.take_double("train.adam_beta1");
    cp.train.adam_beta2 = cfg.take_double("train.adam_beta2");
    cp.train.adam_eps = cfg.take_double("train.adam_eps");
    cp.train.warmup_epochs = cfg.take_size("train.warmup_epochs");
    cp.train.warmup_ramp = cfg.take_bool("train.warmup_ramp");
    cp.train.beta_target = cfg.take_double("train.beta_target");
    cp.train.early_stop_patience = cfg.take_size("train.early_stop_patience");
    cp.train.early_stop_min_delta = cfg.take_double("train.early_stop_min_delta");
    cp.train.seed = cfg.take_u64("train.seed");
    cp.train.validation_fraction = cfg.take_double("train.validation_fraction");
    cp.train.grad_clip = cfg.take_bool("train.grad_clip");
    cp.train.grad_clip_norm = cfg.take_double("train.grad_clip_norm");
    cp.norm.transform = cfg.take("norm.transform");
    cp.norm.scale = cfg.take_double("norm.scale");
    cfg.expect_empty();

    try {
        cp.model.validate();
        cp.train.validate();
    } catch (const ValidationError& e) {
        throw IoError(path.string() + ": checkpoint config is invalid: " + e.what());
    }
    if (!(cp.norm.scale >= 0.0))
        throw IoError(path.string() + ": checkpoint norm.scale is negative");

    std::map<std::string, std::vector<size_t>> expected;
    for (auto& [name, shape] : param_shapes(cp.model)) expected.emplace(name, std::move(shape));

    std::map<std::string, Tensor*> slots;
    for (auto& [name, t] : cp.params.named()) slots.emplace(name, t);

    while (r.remaining() > 0) {
        const std::string name = r.str(r.u32());
        auto exp = expected.find(name);
        if (exp == expected.end())
            throw IoError(path.string() + ": unexpected tensor '" + name + "' in checkpoint");
        std::vector<size_t> shape(r.u32());
        if (shape.size() > 8)
            throw IoError(path.string() + ": tensor '" + name + "' has implausible rank " +
                          std::to_string(shape.size()));
        size_t numel = 1;
        for (size_t& d : shape) {
            d = r.u32();
            numel *= d;
        }
        if (shape != exp->second)
            throw IoError(path.string() + ": tensor '" + name + "' has shape " +
                          shape_text(shape) + " but the embedded config requires " +
                          shape_text(exp->second));
        Tensor* slot = slots.at(name);
        if (slot->defined())
            throw IoError(path.string() + ": duplicate tensor '" + name + "' in checkpoint");
        std::vector<float> raw(numel);
        r.raw(raw.data(), 4 * numel);
        std::vector<double> data(raw.begin(), raw.end());
        *slot = Tensor::from_data(std::move(shape), std::move(data), /*requires_grad=*/true);
    }

    for (const auto& [name, t] : slots)
        if (!t->defined())
            throw IoError(path.string() + ": checkpoint is missing tensor '" + name + "'");
    return cp;
}

}  // namespace wxgen
