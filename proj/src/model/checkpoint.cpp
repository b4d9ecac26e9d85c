#include "ecglink/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ecglink/error.hpp"
#include "json.hpp"

namespace ecglink::model {

namespace {

constexpr std::array<char, 8> kMagic{'E', 'C', 'G', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

void put_doubles(std::string& out, std::span<const double> values) {
    for (double v : values) {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

class Reader {
public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
                 << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::vector<double> doubles(std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) {
            x = std::bit_cast<double>(u64());
        }
        return v;
    }

    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw IntegrityError("checkpoint is truncated");
        }
    }

    std::string data_;
    std::size_t pos_ = 0;
};

nlohmann::json config_json(const ViTConfig& c) {
    return {{"patch_size", c.patch_size},   {"embed_dim", c.embed_dim},         {"num_layers", c.num_layers},
            {"num_heads", c.num_heads},     {"mlp_dim", c.mlp_dim},             {"survival_prob", c.survival_prob},
            {"num_classes", c.num_classes}, {"window_len", c.window_len}};
}

ViTConfig config_from(const nlohmann::json& j) {
    ViTConfig c;
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
    c.survival_prob = j.at("survival_prob").get<double>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.window_len = j.at("window_len").get<std::size_t>();
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const numerics::OptimizerState& optimizer,
                     std::uint64_t epoch, const std::string& rng_state) {
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        tensors.push_back({{"name", model.names()[i]}, {"shape", model.params()[i].shape()}});
    }
    const bool has_moments = optimizer.first_moment.size() == model.params().size();
    const nlohmann::json header{
        {"kind", to_string(model.kind())},
        {"config", config_json(model.config())},
        {"tensors", tensors},
        {"epoch", epoch},
        {"rng_state", rng_state},
        {"optimizer",
         {{"step_count", optimizer.step_count},
          {"lr_max", std::bit_cast<std::uint64_t>(optimizer.lr_max)},
          {"lr_min", std::bit_cast<std::uint64_t>(optimizer.lr_min)},
          {"weight_decay", std::bit_cast<std::uint64_t>(optimizer.weight_decay)},
          {"beta1", std::bit_cast<std::uint64_t>(optimizer.beta1)},
          {"beta2", std::bit_cast<std::uint64_t>(optimizer.beta2)},
          {"epsilon", std::bit_cast<std::uint64_t>(optimizer.epsilon)},
          {"has_moments", has_moments}}},
    };
    const std::string text = header.dump();

    std::string out(kMagic.begin(), kMagic.end());
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((kVersion >> (8 * i)) & 0xffu));
    }
    put_u64(out, text.size());
    out += text;
    for (const auto& p : model.params()) {
        put_doubles(out, p.values());
    }
    if (has_moments) {
        for (const auto& m : optimizer.first_moment) {
            put_doubles(out, m);
        }
        for (const auto& v : optimizer.second_moment) {
            put_doubles(out, v);
        }
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw IoError("cannot open checkpoint for writing: " + path.string());
    }
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) {
        throw IoError("failed writing checkpoint: " + path.string());
    }
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open checkpoint: " + path.string());
    }
    Reader in(std::string(std::istreambuf_iterator<char>(file), {}));
    const std::string magic = in.bytes(kMagic.size());
    if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
        throw IntegrityError("not a checkpoint file: " + path.string());
    }
    if (const auto version = in.u32(); version != kVersion) {
        throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.bytes(in.u64()));
        const ModelKind kind = model_kind_from_string(header.at("kind").get<std::string>());
        const ViTConfig config = config_from(header.at("config"));
        std::vector<Tensor> params;
        for (const auto& t : header.at("tensors")) {
            const auto shape = t.at("shape").get<numerics::Shape>();
            params.emplace_back(shape, in.doubles(numerics::shape_size(shape)), true);
        }
        Model model(kind, config, std::move(params));
        for (std::size_t i = 0; i < model.names().size(); ++i) {
            if (header.at("tensors")[i].at("name").get<std::string>() != model.names()[i]) {
                throw IntegrityError("checkpoint tensor order does not match the model layout");
            }
        }
        const auto& o = header.at("optimizer");
        numerics::OptimizerState opt;
        opt.step_count = o.at("step_count").get<std::uint64_t>();
        opt.lr_max = std::bit_cast<double>(o.at("lr_max").get<std::uint64_t>());
        opt.lr_min = std::bit_cast<double>(o.at("lr_min").get<std::uint64_t>());
        opt.weight_decay = std::bit_cast<double>(o.at("weight_decay").get<std::uint64_t>());
        opt.beta1 = std::bit_cast<double>(o.at("beta1").get<std::uint64_t>());
        opt.beta2 = std::bit_cast<double>(o.at("beta2").get<std::uint64_t>());
        opt.epsilon = std::bit_cast<double>(o.at("epsilon").get<std::uint64_t>());
        if (o.at("has_moments").get<bool>()) {
            for (const auto& p : model.params()) {
                opt.first_moment.push_back(in.doubles(p.size()));
            }
            for (const auto& p : model.params()) {
                opt.second_moment.push_back(in.doubles(p.size()));
            }
        }
        if (!in.at_end()) {
            throw IntegrityError("checkpoint has trailing bytes");
        }
        return CheckpointData{std::move(model), std::move(opt), header.at("epoch").get<std::uint64_t>(),
                              header.at("rng_state").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("malformed checkpoint header: ") + e.what());
    } catch (const ConfigError& e) {
        throw IntegrityError(std::string("checkpoint does not describe a valid model: ") + e.what());
    }
}

}  // namespace ecglink::model
