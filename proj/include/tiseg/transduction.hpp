#pragma once

#include <random>
#include <vector>

#include "tiseg/backbone.hpp"
#include "tiseg/maskenc.hpp"
#include "tiseg/nn.hpp"

namespace tiseg {

// Projections for multi-head attention:
//   logits_h = (q W_q)_h (k W_k)_h^T * logit_scale
//   out      = concat_h(softmax(logits_h) (v W_v)_h) W_o
// Head width is model_width / heads for queries, keys and values alike.
struct AttentionParams {
    Tensor w_q;  // Cq x M
    Tensor w_k;  // Ck x M
    Tensor w_v;  // Dv x M
    Tensor w_o;  // M x Dout; undefined means heads are concatenated without mixing
    int heads = 1;
    double logit_scale = 1.0 / 30.0;

    static AttentionParams make(int64_t q_dim, int64_t k_dim, int64_t v_dim, int64_t model_width, int64_t out_dim,
                                int heads, double logit_scale, std::mt19937_64& rng);
    int64_t model_width() const { return w_q.dim(1); }
    void collect(const std::string& prefix, ParamList& out) const;
};

// q: n x Cq, k: m x Ck, v: m x Dv. Throws when m == 0 or shapes disagree.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& p);

enum class Origin { template_set, target };

struct TokenSequence {
    Tensor tokens;  // L x C, L = images * h * w, row-major within each image
    Origin origin = Origin::target;
    int64_t images = 1;
    int64_t h = 0;
    int64_t w = 0;
};

// Fixed 2-D sinusoidal encoding, h*w x channels. The first half of the
// channels encodes the row, the second half the column.
Tensor positional_encoding_2d(int64_t h, int64_t w, int64_t channels);

struct EncoderBlock {
    AttentionParams attn;
    LayerNorm ln1;
    Linear ff1, ff2;
    LayerNorm ln2;

    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamList& out) const;
};

// Self-attention encoder shared by template and target features.
class TransformerEncoder {
public:
    TransformerEncoder(int64_t channels, int layers, int heads, int ff_multiplier, double logit_scale,
                       bool positional_encoding, std::mt19937_64& rng);

    // All template images form one joint sequence.
    TokenSequence encode_templates(const FeatureMap& templates) const;
    // Single target image (batch item `item`).
    TokenSequence encode_target(const FeatureMap& targets, int64_t item) const;

    int layers() const { return static_cast<int>(blocks_.size()); }
    void collect(const std::string& prefix, ParamList& out) const;

private:
    TokenSequence encode(const Tensor& nchw, Origin origin) const;

    int64_t channels_;
    bool positional_encoding_;
    std::vector<EncoderBlock> blocks_;
};

// Convenience for a single target: (O_T, O).
std::pair<TokenSequence, TokenSequence> encode_tokens(const TransformerEncoder& enc, const FeatureMap& templates,
                                                      const FeatureMap& target);

struct PropagationBlock {
    Linear query_refine;  // D -> C, used from the second block on
    AttentionParams attn;
    LayerNorm ln1;
    Linear ff1, ff2;
    LayerNorm ln2;

    void collect(const std::string& prefix, ParamList& out, bool first, bool feedforward, bool norm) const;
};

// Cross-attention decoder: target tokens query template tokens, values are
// the template mask encodings.
class LabelPropagator {
public:
    struct Options {
        int layers = 2;
        bool feedforward = true;
        bool norm = true;
        int heads = 4;
        int ff_multiplier = 2;
        double logit_scale = 1.0 / 30.0;
    };

    LabelPropagator(int64_t channels, int64_t mask_channels, Options opt, std::mt19937_64& rng);

    // Returns the target-aligned 1 x D x h x w encoding.
    MaskEncoding propagate(const TokenSequence& target, const TokenSequence& templates,
                           const MaskEncoding& template_encoding) const;

    std::vector<PropagationBlock>& blocks() { return blocks_; }
    void collect(const std::string& prefix, ParamList& out) const;

private:
    Options opt_;
    std::vector<PropagationBlock> blocks_;
};

}  // namespace tiseg
