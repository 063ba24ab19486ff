#include "tiseg/transduction.hpp"

#include <cmath>
#include <stdexcept>

namespace tiseg {

AttentionParams AttentionParams::make(int64_t q_dim, int64_t k_dim, int64_t v_dim, int64_t model_width,
                                      int64_t out_dim, int heads, double logit_scale, std::mt19937_64& rng) {
    if (heads < 1 || model_width % heads != 0)
        throw std::invalid_argument("model width " + std::to_string(model_width) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    AttentionParams p;
    p.w_q = xavier_normal({q_dim, model_width}, q_dim, model_width, rng);
    p.w_k = xavier_normal({k_dim, model_width}, k_dim, model_width, rng);
    p.w_v = xavier_normal({v_dim, model_width}, v_dim, model_width, rng);
    p.w_o = xavier_normal({model_width, out_dim}, model_width, out_dim, rng);
    p.heads = heads;
    p.logit_scale = logit_scale;
    return p;
}

void AttentionParams::collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(join_name(prefix, "w_q"), w_q);
    out.emplace_back(join_name(prefix, "w_k"), w_k);
    out.emplace_back(join_name(prefix, "w_v"), w_v);
    if (w_o.defined()) out.emplace_back(join_name(prefix, "w_o"), w_o);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionParams& p) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw std::invalid_argument("attention expects 2-D inputs");
    if (k.dim(0) == 0) throw std::invalid_argument("attention: no key/value tokens (m = 0)");
    if (k.dim(0) != v.dim(0))
        throw std::invalid_argument("attention: " + std::to_string(k.dim(0)) + " keys but " +
                                    std::to_string(v.dim(0)) + " values");
    if (!(p.logit_scale > 0.0)) throw std::invalid_argument("attention: logit scale must be > 0");
    const int64_t M = p.w_q.dim(1);
    if (p.w_k.dim(1) != M || p.w_v.dim(1) != M || M % p.heads != 0)
        throw std::invalid_argument("attention: inconsistent projection widths");

    Tensor qp = matmul(q, p.w_q);
    Tensor kp = matmul(k, p.w_k);
    Tensor vp = matmul(v, p.w_v);
    const int64_t hd = M / p.heads;
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(p.heads));
    for (int h = 0; h < p.heads; ++h) {
        Tensor qh = p.heads == 1 ? qp : slice(qp, 1, h * hd, (h + 1) * hd);
        Tensor kh = p.heads == 1 ? kp : slice(kp, 1, h * hd, (h + 1) * hd);
        Tensor vh = p.heads == 1 ? vp : slice(vp, 1, h * hd, (h + 1) * hd);
        Tensor weights = softmax_rows(matmul(qh, kh, false, true), p.logit_scale);
        outs.push_back(matmul(weights, vh));
    }
    Tensor mixed = outs.size() == 1 ? outs[0] : concat(outs, 1);
    return p.w_o.defined() ? matmul(mixed, p.w_o) : mixed;
}

Tensor positional_encoding_2d(int64_t h, int64_t w, int64_t channels) {
    std::vector<double> v(static_cast<size_t>(h * w * channels), 0.0);
    const int64_t half = channels / 2;
    auto fill = [&](int64_t pos, int64_t offset, int64_t width, double* row) {
        for (int64_t i = 0; i < width; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(std::max<int64_t>(width, 1)));
            row[offset + i] = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
        }
    };
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double* row = v.data() + (y * w + x) * channels;
            fill(y, 0, half, row);
            fill(x, half, channels - half, row);
        }
    return Tensor::from({h * w, channels}, std::move(v));
}

Tensor EncoderBlock::operator()(const Tensor& x) const {
    Tensor y = ln1(add(x, attention(x, x, x, attn)));
    return ln2(add(y, ff2(relu(ff1(y)))));
}

void EncoderBlock::collect(const std::string& prefix, ParamList& out) const {
    attn.collect(join_name(prefix, "attn"), out);
    ln1.collect(join_name(prefix, "ln1"), out);
    ff1.collect(join_name(prefix, "ff1"), out);
    ff2.collect(join_name(prefix, "ff2"), out);
    ln2.collect(join_name(prefix, "ln2"), out);
}

TransformerEncoder::TransformerEncoder(int64_t channels, int layers, int heads, int ff_multiplier,
                                       double logit_scale, bool positional_encoding, std::mt19937_64& rng)
    : channels_(channels), positional_encoding_(positional_encoding) {
    for (int l = 0; l < layers; ++l) {
        EncoderBlock b;
        b.attn = AttentionParams::make(channels, channels, channels, channels, channels, heads, logit_scale, rng);
        b.ln1 = LayerNorm(channels);
        b.ff1 = Linear(channels, channels * ff_multiplier, rng);
        b.ff2 = Linear(channels * ff_multiplier, channels, rng);
        b.ln2 = LayerNorm(channels);
        blocks_.push_back(std::move(b));
    }
}

TokenSequence TransformerEncoder::encode(const Tensor& nchw, Origin origin) const {
    if (nchw.dim(1) != channels_)
        throw std::invalid_argument("transformer encoder expects " + std::to_string(channels_) + " channels, got " +
                                    std::to_string(nchw.dim(1)));
    const int64_t n = nchw.dim(0), h = nchw.dim(2), w = nchw.dim(3);
    Tensor tokens = nchw_to_rows(nchw);
    if (positional_encoding_) {
        Tensor pe = positional_encoding_2d(h, w, channels_);
        if (n > 1) {
            std::vector<Tensor> reps(static_cast<size_t>(n), pe);
            pe = concat(reps, 0);
        }
        tokens = add(tokens, pe);
    }
    for (const auto& b : blocks_) tokens = b(tokens);
    return {tokens, origin, n, h, w};
}

TokenSequence TransformerEncoder::encode_templates(const FeatureMap& templates) const {
    return encode(templates.values, Origin::template_set);
}

TokenSequence TransformerEncoder::encode_target(const FeatureMap& targets, int64_t item) const {
    Tensor one = targets.batch() == 1 ? targets.values : slice(targets.values, 0, item, item + 1);
    return encode(one, Origin::target);
}

void TransformerEncoder::collect(const std::string& prefix, ParamList& out) const {
    for (size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(join_name(prefix, "block" + std::to_string(l)), out);
}

std::pair<TokenSequence, TokenSequence> encode_tokens(const TransformerEncoder& enc, const FeatureMap& templates,
                                                      const FeatureMap& target) {
    if (templates.channels() != target.channels())
        throw std::invalid_argument("encode_tokens: template channels " + std::to_string(templates.channels()) +
                                    " != target channels " + std::to_string(target.channels()));
    return {enc.encode_templates(templates), enc.encode_target(target, 0)};
}

void PropagationBlock::collect(const std::string& prefix, ParamList& out, bool first, bool feedforward,
                               bool norm) const {
    if (!first) query_refine.collect(join_name(prefix, "query_refine"), out);
    attn.collect(join_name(prefix, "attn"), out);
    if (norm) ln1.collect(join_name(prefix, "ln1"), out);
    if (feedforward) {
        ff1.collect(join_name(prefix, "ff1"), out);
        ff2.collect(join_name(prefix, "ff2"), out);
        if (norm) ln2.collect(join_name(prefix, "ln2"), out);
    }
}

LabelPropagator::LabelPropagator(int64_t channels, int64_t mask_channels, Options opt, std::mt19937_64& rng)
    : opt_(opt) {
    if (opt.layers < 1) throw std::invalid_argument("label propagator needs at least one block");
    for (int l = 0; l < opt.layers; ++l) {
        PropagationBlock b;
        if (l > 0) b.query_refine = Linear(mask_channels, channels, rng, false);
        b.attn = AttentionParams::make(channels, channels, mask_channels, channels, mask_channels, opt.heads,
                                       opt.logit_scale, rng);
        if (opt.norm) b.ln1 = LayerNorm(mask_channels);
        if (opt.feedforward) {
            b.ff1 = Linear(mask_channels, mask_channels * opt.ff_multiplier, rng);
            b.ff2 = Linear(mask_channels * opt.ff_multiplier, mask_channels, rng);
            if (opt.norm) b.ln2 = LayerNorm(mask_channels);
        }
        blocks_.push_back(std::move(b));
    }
}

MaskEncoding LabelPropagator::propagate(const TokenSequence& target, const TokenSequence& templates,
                                        const MaskEncoding& template_encoding) const {
    const Tensor& E = template_encoding.values;
    if (E.rank() != 4 || E.dim(0) != templates.images || E.dim(2) != templates.h || E.dim(3) != templates.w)
        throw std::invalid_argument("propagate: template encoding " + shape_str(E.shape()) +
                                    " is not aligned with " + std::to_string(templates.images) + " template grids of " +
                                    std::to_string(templates.h) + "x" + std::to_string(templates.w));
    Tensor values = nchw_to_rows(E);
    if (values.dim(0) != templates.tokens.dim(0))
        throw std::invalid_argument("propagate: token count mismatch between template tokens and encodings");

    Tensor y;
    for (size_t l = 0; l < blocks_.size(); ++l) {
        const auto& b = blocks_[l];
        Tensor q = l == 0 ? target.tokens : add(target.tokens, b.query_refine(y));
        Tensor a = attention(q, templates.tokens, values, b.attn);
        y = l == 0 ? a : add(y, a);
        if (opt_.norm) y = b.ln1(y);
        if (opt_.feedforward) {
            y = add(y, b.ff2(relu(b.ff1(y))));
            if (opt_.norm) y = b.ln2(y);
        }
    }
    return {rows_to_nchw(y, 1, target.h, target.w), Head::tra};
}

void LabelPropagator::collect(const std::string& prefix, ParamList& out) const {
    for (size_t l = 0; l < blocks_.size(); ++l)
        blocks_[l].collect(join_name(prefix, "block" + std::to_string(l)), out, l == 0, opt_.feedforward, opt_.norm);
}

}  // namespace tiseg
