#pragma once

// Versioned model container: an 8-byte magic, a u32 format version and a
// u64 header length (both little-endian), a JSON header describing every
// tensor, then the tensors as little-endian IEEE-754 doubles in header
// order. Round trips are bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "portmanteau/decoding.hpp"
#include "portmanteau/training.hpp"

namespace portmanteau {

inline constexpr char kModelMagic[8] = {'P', 'M', 'N', 'T', 'M', 'D', 'L', '\0'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelMember {
    ModelConfig config;
    std::uint64_t seed = 0;
    ParamStore params;
};

struct ModelFile {
    std::uint32_t version = kModelFormatVersion;
    std::string alphabet = Alphabet::standard().spec();
    nlohmann::json run_config = nlohmann::json::object();
    nlohmann::json train_config = nlohmann::json::object();
    std::string data_fingerprint;
    std::vector<ModelMember> members;

    void add(const Seq2SeqModel& m, std::uint64_t seed) { members.push_back({m.config(), seed, m.params()}); }
    void add(const CharLM& m, std::uint64_t seed) { members.push_back({m.config(), seed, m.params()}); }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"optimizer", to_string(c.optimizer)},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"clip_norm", c.clip_norm},
            {"seed", c.seed},
            {"stop_at_full_match", c.stop_at_full_match}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.stop_at_full_match = j.at("stop_at_full_match").get<bool>();
    return c;
}

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::string_view in, std::size_t pos) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

}  // namespace detail

inline std::string serialize(const ModelFile& file) {
    nlohmann::json header;
    header["format"] = "portmanteau-model";
    header["version"] = file.version;
    header["alphabet"] = file.alphabet;
    header["alphabet_hash"] = fnv1a64(file.alphabet);
    header["start_symbol"] = start_of_sequence();
    header["run_config"] = file.run_config;
    header["train_config"] = file.train_config;
    header["data_fingerprint"] = file.data_fingerprint;
    std::string payload;
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : file.members) {
        nlohmann::json jm;
        jm["arch"] = to_string(m.config.arch);
        jm["d_emb"] = m.config.d_emb;
        jm["d_hidden"] = m.config.d_hidden;
        jm["attention"] = m.config.attention;
        jm["seed"] = m.seed;
        nlohmann::json tensors = nlohmann::json::array();
        for (const auto& [name, mat] : m.params.values()) {
            tensors.push_back({{"name", name},
                               {"rows", mat.rows()},
                               {"cols", mat.cols()},
                               {"dtype", "f64le"},
                               {"offset", payload.size()}});
            for (double x : mat.data()) detail::put_le(payload, std::bit_cast<std::uint64_t>(x));
        }
        jm["tensors"] = std::move(tensors);
        members.push_back(std::move(jm));
    }
    header["members"] = std::move(members);
    const std::string h = header.dump();

    std::string out(kModelMagic, sizeof(kModelMagic));
    detail::put_le<std::uint32_t>(out, file.version);
    detail::put_le<std::uint64_t>(out, h.size());
    out += h;
    out += payload;
    return out;
}

inline ModelFile deserialize(std::string_view bytes) {
    constexpr std::size_t prefix = sizeof(kModelMagic) + 4 + 8;
    if (bytes.size() < prefix || std::memcmp(bytes.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
        throw IoError("not a portmanteau model file");
    }
    const auto version = detail::get_le<std::uint32_t>(bytes, sizeof(kModelMagic));
    if (version != kModelFormatVersion) {
        throw IoError("model format version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kModelFormatVersion) + ")");
    }
    const auto hlen = detail::get_le<std::uint64_t>(bytes, sizeof(kModelMagic) + 4);
    if (bytes.size() < prefix + hlen) throw IoError("truncated model header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(prefix, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("corrupt model header: ") + e.what());
    }
    const std::string_view payload = bytes.substr(prefix + hlen);

    ModelFile f;
    try {
        f.version = version;
        f.alphabet = header.at("alphabet").get<std::string>();
        if (f.alphabet != Alphabet::standard().spec()) {
            throw IoError("model alphabet '" + f.alphabet + "' differs from '" + Alphabet::standard().spec() + "'");
        }
        if (header.at("start_symbol").get<SymbolId>() != start_of_sequence()) {
            throw IoError("model was trained with a different start-of-sequence symbol");
        }
        f.run_config = header.at("run_config");
        f.train_config = header.at("train_config");
        f.data_fingerprint = header.at("data_fingerprint").get<std::string>();
        for (const auto& jm : header.at("members")) {
            ModelMember m;
            m.config.arch = parse_architecture(jm.at("arch").get<std::string>());
            m.config.d_emb = jm.at("d_emb").get<std::size_t>();
            m.config.d_hidden = jm.at("d_hidden").get<std::size_t>();
            m.config.attention = jm.at("attention").get<bool>();
            m.seed = jm.at("seed").get<std::uint64_t>();
            for (const auto& jt : jm.at("tensors")) {
                if (jt.at("dtype").get<std::string>() != "f64le") throw IoError("unsupported tensor dtype");
                const auto rows = jt.at("rows").get<std::size_t>();
                const auto cols = jt.at("cols").get<std::size_t>();
                const auto offset = jt.at("offset").get<std::size_t>();
                if (offset + rows * cols * 8 > payload.size()) {
                    throw IoError("tensor '" + jt.at("name").get<std::string>() + "' extends past end of file");
                }
                std::vector<double> data(rows * cols);
                for (std::size_t i = 0; i < data.size(); ++i) {
                    data[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(payload, offset + 8 * i));
                }
                m.params.add(jt.at("name").get<std::string>(), Matrix(rows, cols, std::move(data)));
            }
            f.members.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed model header: ") + e.what());
    }
    return f;
}

// Writes to a temporary sibling and renames it into place.
inline void write_file_atomic(const std::string& path, std::string_view contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_model_file(const std::string& path, const ModelFile& file) {
    write_file_atomic(path, serialize(file));
}

inline ModelFile load_model_file(const std::string& path) { return deserialize(read_file(path)); }

// Rebuilds the models of a file, grouped by architecture.
inline ModelSet to_model_set(const ModelFile& file) {
    ModelSet set;
    for (const auto& m : file.members) {
        switch (m.config.arch) {
            case Architecture::Forward: set.forward.emplace_back(m.config, m.params); break;
            case Architecture::Backward: set.backward.emplace_back(m.config, m.params); break;
            case Architecture::CharLM: set.lm.emplace_back(m.config, m.params); break;
        }
    }
    return set;
}

}  // namespace portmanteau
