#pragma once

// A small trainable transformer. Generative setting: encoder plus causal
// decoder with tied input/output embeddings and greedy decoding. Extractive
// setting: the same encoder with a per-token tagging head. Pre-LN residual
// blocks, sinusoidal positions, GELU feed-forward.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evqa/errors.hpp"
#include "evqa/modes.hpp"
#include "evqa/optimizer.hpp"
#include "evqa/tensor.hpp"
#include "evqa/text.hpp"

namespace evqa {

struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int d = 64;
    int ffn = 128;
    int vocab = 0;
    int max_len = 192;
    float dropout = 0.0f;
    std::uint64_t seed = 5;
    Setting setting = Setting::generative;
    Tagging tagging = Tagging::io;

    int tag_labels() const { return tagging == Tagging::io ? 2 : 3; }

    void validate() const {
        if (layers < 1 || heads < 1 || d < 1 || ffn < 1)
            throw ConfigError("model config: layers/heads/d/ffn must be positive");
        if (d % heads != 0) throw ConfigError("model config: d must be divisible by heads");
        if (!(dropout >= 0.0f && dropout < 1.0f))
            throw ConfigError("model config: dropout must lie in [0, 1)");
        if (vocab < 7) throw ConfigError("model config: vocabulary too small");
        if (max_len < 8) throw ConfigError("model config: max_len too small");
    }
};

template <class T>
struct Linear {
    Tensor<T> w;  // in x out
    Tensor<T> b;  // 1 x out

    static Linear init(int in, int out, std::mt19937_64& rng) {
        const double stddev = std::sqrt(2.0 / double(in + out));
        Linear l;
        l.w = Tensor<T>::randn(in, out, rng, T(stddev), true);
        l.b = Tensor<T>::zeros(1, out, true);
        return l;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return add_rowvec(matmul(x, w), b); }

    void register_params(ParamSet<T>& ps, const std::string& name) const {
        ps.add(name + ".w", w, true);
        ps.add(name + ".b", b, false);
    }
};

template <class T>
struct LayerNorm {
    Tensor<T> gamma, beta;

    static LayerNorm init(int d) {
        LayerNorm ln;
        ln.gamma = Tensor<T>::full(1, d, T(1), true);
        ln.beta = Tensor<T>::zeros(1, d, true);
        return ln;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm_rows(x, gamma, beta); }

    void register_params(ParamSet<T>& ps, const std::string& name) const {
        ps.add(name + ".gamma", gamma, false);
        ps.add(name + ".beta", beta, false);
    }
};

template <class T>
struct MultiHeadAttention {
    Linear<T> q, k, v, o;
    int heads = 1;
    int dk = 1;

    static MultiHeadAttention init(int d, int heads, std::mt19937_64& rng) {
        MultiHeadAttention a;
        a.heads = heads;
        a.dk = d / heads;
        a.q = Linear<T>::init(d, d, rng);
        a.k = Linear<T>::init(d, d, rng);
        a.v = Linear<T>::init(d, d, rng);
        a.o = Linear<T>::init(d, d, rng);
        return a;
    }

    Tensor<T> forward(const Tensor<T>& queries, const Tensor<T>& memory,
                      const Tensor<T>* mask) const {
        const Tensor<T> qp = q(queries), kp = k(memory), vp = v(memory);
        std::vector<Tensor<T>> ctx;
        ctx.reserve(heads);
        const T inv_sqrt_dk = T(1.0 / std::sqrt(double(dk)));
        for (int h = 0; h < heads; ++h) {
            const Tensor<T> qh = slice_cols(qp, h * dk, dk);
            const Tensor<T> kh = slice_cols(kp, h * dk, dk);
            const Tensor<T> vh = slice_cols(vp, h * dk, dk);
            Tensor<T> scores = scale(matmul_nt(qh, kh), inv_sqrt_dk);
            if (mask) scores = add(scores, *mask);
            ctx.push_back(matmul(softmax_rows(scores), vh));
        }
        return o(heads == 1 ? ctx[0] : concat_cols(ctx));
    }

    void register_params(ParamSet<T>& ps, const std::string& name) const {
        q.register_params(ps, name + ".q");
        k.register_params(ps, name + ".k");
        v.register_params(ps, name + ".v");
        o.register_params(ps, name + ".o");
    }
};

template <class T>
struct FeedForward {
    Linear<T> up, down;

    static FeedForward init(int d, int ffn, std::mt19937_64& rng) {
        return {Linear<T>::init(d, ffn, rng), Linear<T>::init(ffn, d, rng)};
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return down(gelu(up(x))); }

    void register_params(ParamSet<T>& ps, const std::string& name) const {
        up.register_params(ps, name + ".up");
        down.register_params(ps, name + ".down");
    }
};

template <class T>
struct EncoderLayer {
    MultiHeadAttention<T> attn;
    FeedForward<T> ff;
    LayerNorm<T> ln1, ln2;

    static EncoderLayer init(int d, int heads, int ffn, std::mt19937_64& rng) {
        return {MultiHeadAttention<T>::init(d, heads, rng), FeedForward<T>::init(d, ffn, rng),
                LayerNorm<T>::init(d), LayerNorm<T>::init(d)};
    }

    Tensor<T> forward(Tensor<T> x) const {
        const Tensor<T> a = ln1(x);
        x = add(x, attn.forward(a, a, nullptr));
        x = add(x, ff(ln2(x)));
        return x;
    }

    void register_params(ParamSet<T>& ps, const std::string& name) const {
        attn.register_params(ps, name + ".attn");
        ff.register_params(ps, name + ".ff");
        ln1.register_params(ps, name + ".ln1");
        ln2.register_params(ps, name + ".ln2");
    }
};

template <class T>
struct DecoderLayer {
    MultiHeadAttention<T> self_attn, cross_attn;
    FeedForward<T> ff;
    LayerNorm<T> ln1, ln2, ln3;

    static DecoderLayer init(int d, int heads, int ffn, std::mt19937_64& rng) {
        return {MultiHeadAttention<T>::init(d, heads, rng),
                MultiHeadAttention<T>::init(d, heads, rng),
                FeedForward<T>::init(d, ffn, rng),
                LayerNorm<T>::init(d),
                LayerNorm<T>::init(d),
                LayerNorm<T>::init(d)};
    }

    Tensor<T> forward(Tensor<T> x, const Tensor<T>& enc, const Tensor<T>& causal_mask) const {
        const Tensor<T> a = ln1(x);
        x = add(x, self_attn.forward(a, a, &causal_mask));
        x = add(x, cross_attn.forward(ln2(x), enc, nullptr));
        x = add(x, ff(ln3(x)));
        return x;
    }

    void register_params(ParamSet<T>& ps, const std::string& name) const {
        self_attn.register_params(ps, name + ".self");
        cross_attn.register_params(ps, name + ".cross");
        ff.register_params(ps, name + ".ff");
        ln1.register_params(ps, name + ".ln1");
        ln2.register_params(ps, name + ".ln2");
        ln3.register_params(ps, name + ".ln3");
    }
};

template <class T>
class Model {
public:
    explicit Model(ModelConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        std::mt19937_64 rng(cfg_.seed);
        embedding_ = Tensor<T>::randn(cfg_.vocab, cfg_.d, rng, T(0.1), true);
        positions_ = sinusoidal_positions(cfg_.max_len, cfg_.d);
        for (int l = 0; l < cfg_.layers; ++l)
            encoder_.push_back(EncoderLayer<T>::init(cfg_.d, cfg_.heads, cfg_.ffn, rng));
        enc_ln_ = LayerNorm<T>::init(cfg_.d);
        if (cfg_.setting == Setting::generative) {
            for (int l = 0; l < cfg_.layers; ++l)
                decoder_.push_back(DecoderLayer<T>::init(cfg_.d, cfg_.heads, cfg_.ffn, rng));
            dec_ln_ = LayerNorm<T>::init(cfg_.d);
        } else {
            tag_head_ = Linear<T>::init(cfg_.d, cfg_.tag_labels(), rng);
        }
    }

    const ModelConfig& config() const { return cfg_; }

    void register_params(ParamSet<T>& ps) const {
        ps.add("embedding", embedding_, true);
        for (size_t l = 0; l < encoder_.size(); ++l)
            encoder_[l].register_params(ps, "enc." + std::to_string(l));
        enc_ln_.register_params(ps, "enc.final_ln");
        if (cfg_.setting == Setting::generative) {
            for (size_t l = 0; l < decoder_.size(); ++l)
                decoder_[l].register_params(ps, "dec." + std::to_string(l));
            dec_ln_.register_params(ps, "dec.final_ln");
        } else {
            tag_head_.register_params(ps, "tag_head");
        }
    }

    // Contextual hidden states, one d-vector per input token.
    Tensor<T> encode(const AlignedSequence& seq, bool training = false,
                     std::mt19937_64* dropout_rng = nullptr) const {
        Tensor<T> x = embed(seq.ids(), training, dropout_rng);
        for (const auto& layer : encoder_) x = layer.forward(x);
        return enc_ln_(x);
    }

    // Teacher-forced decoder logits: one vocabulary row per decoder input
    // position. Output projection is tied to the embedding table.
    Tensor<T> decode_logits(const Tensor<T>& enc_h, const std::vector<int>& decoder_input_ids,
                            bool training = false, std::mt19937_64* dropout_rng = nullptr) const {
        require_setting(Setting::generative, "decode_logits");
        Tensor<T> x = embed(decoder_input_ids, training, dropout_rng);
        const Tensor<T> mask = causal_mask(int(decoder_input_ids.size()));
        for (const auto& layer : decoder_) x = layer.forward(x, enc_h, mask);
        return matmul_nt(dec_ln_(x), embedding_);
    }

    // Greedy decoding until "</s>" or the length budget; returns generated
    // ids without the start/end markers.
    std::vector<int> generate(const AlignedSequence& seq, int max_answer_len) const {
        require_setting(Setting::generative, "generate");
        const Tensor<T> enc_h = encode(seq);
        std::vector<int> inputs = {Vocab::kBos};
        std::vector<int> out;
        for (int step = 0; step < max_answer_len; ++step) {
            const Tensor<T> logits = decode_logits(enc_h, inputs);
            const int last = logits.rows() - 1;
            const T* row = logits.values().data() + size_t(last) * cfg_.vocab;
            int best = 0;
            for (int j = 1; j < cfg_.vocab; ++j)
                if (row[j] > row[best]) best = j;
            if (best == Vocab::kEos) break;
            out.push_back(best);
            inputs.push_back(best);
        }
        return out;
    }

    // Label logits over the paragraph tokens of an already-encoded sequence.
    Tensor<T> tag_logits(const Tensor<T>& enc_h, const AlignedSequence& seq) const {
        require_setting(Setting::extractive, "tag_tokens");
        const std::vector<int> pidx = seq.segment_indices(Segment::paragraph);
        if (pidx.empty()) throw ContractError("tag_tokens: sequence has no paragraph tokens");
        return tag_head_(select_rows(enc_h, pidx));
    }

    Tensor<T> tag_tokens(const AlignedSequence& seq) const {
        return tag_logits(encode(seq), seq);
    }

    const Tensor<T>& embedding_table() const { return embedding_; }

private:
    void require_setting(Setting s, const char* op) const {
        if (cfg_.setting != s)
            throw ContractError(std::string(op) + ": model is in the " +
                                setting_name(cfg_.setting) + " setting");
    }

    static Tensor<T> sinusoidal_positions(int max_len, int d) {
        std::vector<T> v(size_t(max_len) * d);
        for (int pos = 0; pos < max_len; ++pos)
            for (int i = 0; i < d; ++i) {
                const double angle = pos / std::pow(10000.0, double(2 * (i / 2)) / d);
                v[size_t(pos) * d + i] = T(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
            }
        return Tensor<T>::from(max_len, d, std::move(v), false);
    }

    Tensor<T> embed(const std::vector<int>& ids, bool training,
                    std::mt19937_64* dropout_rng) const {
        if (int(ids.size()) > cfg_.max_len)
            throw ShapeError("encode: input length " + std::to_string(ids.size()) +
                             " exceeds max length " + std::to_string(cfg_.max_len));
        if (ids.empty()) throw ShapeError("encode: empty input");
        std::vector<int> pos_idx(ids.size());
        for (size_t i = 0; i < ids.size(); ++i) pos_idx[i] = int(i);
        Tensor<T> x = add(scale(embedding(embedding_, ids), T(std::sqrt(double(cfg_.d)))),
                          select_rows(positions_, pos_idx));
        if (training && cfg_.dropout > 0.0f) {
            if (!dropout_rng)
                throw ContractError("encode: dropout requires an RNG in training mode");
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::vector<T> mask(x.size());
            const T keep_scale = T(1.0 / (1.0 - cfg_.dropout));
            for (auto& m : mask) m = unit(*dropout_rng) < cfg_.dropout ? T(0) : keep_scale;
            x = mul(x, Tensor<T>::from(x.rows(), x.cols(), std::move(mask), false));
        }
        return x;
    }

    Tensor<T> causal_mask(int n) const {
        std::vector<T> v(size_t(n) * n, T(0));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) v[size_t(i) * n + j] = T(-1e9);
        return Tensor<T>::from(n, n, std::move(v), false);
    }

    ModelConfig cfg_;
    Tensor<T> embedding_;
    Tensor<T> positions_;
    std::vector<EncoderLayer<T>> encoder_;
    std::vector<DecoderLayer<T>> decoder_;
    LayerNorm<T> enc_ln_, dec_ln_;
    Linear<T> tag_head_;
};

}  // namespace evqa
