#pragma once

// Self-describing binary checkpoint: a JSON header carrying the run config
// and vocabulary, followed by raw little-endian parameter arrays in
// registration order. Reload is bit-exact.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evqa/errors.hpp"
#include "evqa/pipeline.hpp"

namespace evqa {

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'E', 'V', 'Q', 'A', 'C', 'K', 'P', '1'};

template <class V>
void write_pod(std::ostream& out, const V& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::istream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}

}  // namespace detail

template <class T>
void save_checkpoint(const Pipeline<T>& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
    out.write(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    nlohmann::json header = {{"config", p.cfg.to_json()},
                             {"vocab", p.vocab.tokens()},
                             {"dtype", sizeof(T) == 4 ? "f32" : "f64"}};
    const std::string blob = header.dump();
    detail::write_pod<std::uint64_t>(out, blob.size());
    out.write(blob.data(), std::streamsize(blob.size()));
    detail::write_pod<std::uint32_t>(out, std::uint32_t(p.params.count()));
    for (const auto& param : p.params.items()) {
        detail::write_pod<std::uint16_t>(out, std::uint16_t(param.name.size()));
        out.write(param.name.data(), std::streamsize(param.name.size()));
        detail::write_pod<std::uint32_t>(out, std::uint32_t(param.tensor.rows()));
        detail::write_pod<std::uint32_t>(out, std::uint32_t(param.tensor.cols()));
        const auto& v = param.tensor.values();
        out.write(reinterpret_cast<const char*>(v.data()),
                  std::streamsize(v.size() * sizeof(T)));
    }
    if (!out) throw DataError("checkpoint: write failure on '" + path + "'");
}

template <class T>
Pipeline<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in '" + path + "'");
    const auto blob_len = detail::read_pod<std::uint64_t>(in);
    std::string blob(blob_len, '\0');
    in.read(blob.data(), std::streamsize(blob_len));
    if (!in) throw DataError("checkpoint: truncated header");
    nlohmann::json header = nlohmann::json::parse(blob);
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != (sizeof(T) == 4 ? "f32" : "f64"))
        throw DataError("checkpoint: dtype " + dtype + " does not match this build");
    RunConfig cfg = RunConfig::from_json(header.at("config"));
    Vocab vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());

    Pipeline<T> p = Pipeline<T>::build(cfg, std::move(vocab));
    const auto count = detail::read_pod<std::uint32_t>(in);
    if (count != p.params.count())
        throw DataError("checkpoint: parameter count mismatch");
    for (auto& param : p.params.items()) {
        const auto name_len = detail::read_pod<std::uint16_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (name != param.name)
            throw DataError("checkpoint: parameter order mismatch at '" + name + "'");
        const auto rows = detail::read_pod<std::uint32_t>(in);
        const auto cols = detail::read_pod<std::uint32_t>(in);
        if (int(rows) != param.tensor.rows() || int(cols) != param.tensor.cols())
            throw DataError("checkpoint: shape mismatch for '" + name + "'");
        auto& v = param.tensor.mutable_values();
        in.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(T)));
        if (!in) throw DataError("checkpoint: truncated parameter data");
    }
    return p;
}

}  // namespace evqa
