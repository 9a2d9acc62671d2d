#include "conseg/encoder.hpp"

#include <cmath>

namespace conseg::model {

using ad::Tensor;

void EncoderConfig::validate() const {
    if (features < 1 || window < 1 || hidden < 1 || ffn < 1 || heads < 1 || layers < 1 ||
        max_segments < 1)
        throw ConfigError("encoder: all dimensions must be positive");
    if (hidden % heads != 0)
        throw ConfigError("encoder: hidden (" + std::to_string(hidden) +
                          ") must be divisible by heads (" + std::to_string(heads) + ")");
    if (conv_channels.empty()) throw ConfigError("encoder: conv_channels empty");
    if (conv_kernel < 1 || conv_stride < 1)
        throw ConfigError("encoder: conv kernel/stride must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must be in [0,1)");
    if (sigma_floor <= 0.0) throw ConfigError("encoder: sigma_floor must be positive");
    int len = window;
    for (size_t i = 0; i < conv_channels.size(); ++i) {
        if (conv_channels[i] < 1) throw ConfigError("encoder: conv channel sizes must be positive");
        if (len < conv_kernel)
            throw ConfigError("encoder: window " + std::to_string(window) +
                              " is shorter than the conv stack's receptive field");
        len = (len - conv_kernel) / conv_stride + 1;
    }
}

ContextEncoder::ContextEncoder(EncoderConfig cfg, ad::ParameterStore& store, Rng& init_rng)
    : cfg_(std::move(cfg)) {
    cfg_.validate();
    int in_ch = cfg_.features;
    for (size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
        int out_ch = cfg_.conv_channels[i];
        std::string base = "encoder/conv" + std::to_string(i);
        conv_w_.push_back(&store.create_xavier(base + "/w", {out_ch, in_ch, cfg_.conv_kernel},
                                               init_rng));
        conv_b_.push_back(&store.create(base + "/b", {out_ch}));
        in_ch = out_ch;
    }
    embed_w_ = &store.create_xavier("encoder/embed/w", {in_ch, cfg_.hidden}, init_rng);
    embed_b_ = &store.create("encoder/embed/b", {cfg_.hidden});
    pos_table_ = &store.create_normal("encoder/pos/table", {cfg_.max_segments, cfg_.hidden},
                                      init_rng, 0.02);
    int d = cfg_.hidden, dh = cfg_.head_dim();
    for (int l = 0; l < cfg_.layers; ++l) {
        LayerParams lp;
        std::string lbase = "encoder/layer" + std::to_string(l);
        for (int h = 0; h < cfg_.heads; ++h) {
            std::string hbase = lbase + "/head" + std::to_string(h);
            HeadParams hp;
            hp.w_q = &store.create_xavier(hbase + "/w_q", {d, dh}, init_rng);
            hp.w_k = &store.create_xavier(hbase + "/w_k", {d, dh}, init_rng);
            hp.w_v_self = &store.create_xavier(hbase + "/w_v_self", {d, dh}, init_rng);
            hp.w_v_gauss = &store.create_xavier(hbase + "/w_v_gauss", {d, dh}, init_rng);
            hp.w_sigma = &store.create_xavier(hbase + "/w_sigma", {d, 1}, init_rng);
            hp.b_sigma = &store.create(hbase + "/b_sigma", {1});
            hp.b_sigma->value[0] = 0.5;  // softplus(0.5)+floor starts sigma near 1
            hp.gate_w = &store.create_xavier(hbase + "/gate_w", {dh, dh}, init_rng);
            hp.gate_u = &store.create(hbase + "/gate_u", {dh});
            hp.gate_v = &store.create_normal(hbase + "/gate_v", {dh, 1}, init_rng, 0.1);
            lp.heads.push_back(hp);
        }
        lp.ln1_gamma = &store.create(lbase + "/ln1_gamma", {d});
        lp.ln1_beta = &store.create(lbase + "/ln1_beta", {d});
        lp.ln2_gamma = &store.create(lbase + "/ln2_gamma", {d});
        lp.ln2_beta = &store.create(lbase + "/ln2_beta", {d});
        std::fill(lp.ln1_gamma->value.begin(), lp.ln1_gamma->value.end(), 1.0);
        std::fill(lp.ln2_gamma->value.begin(), lp.ln2_gamma->value.end(), 1.0);
        lp.ffn_w1 = &store.create_xavier(lbase + "/ffn_w1", {d, cfg_.ffn}, init_rng);
        lp.ffn_b1 = &store.create(lbase + "/ffn_b1", {cfg_.ffn});
        lp.ffn_w2 = &store.create_xavier(lbase + "/ffn_w2", {cfg_.ffn, d}, init_rng);
        lp.ffn_b2 = &store.create(lbase + "/ffn_b2", {d});
        layers_.push_back(std::move(lp));
    }
    ln_f_gamma_ = &store.create("encoder/ln_f_gamma", {d});
    ln_f_beta_ = &store.create("encoder/ln_f_beta", {d});
    std::fill(ln_f_gamma_->value.begin(), ln_f_gamma_->value.end(), 1.0);
}

Tensor ContextEncoder::embed_segments(ad::Tape& tape,
                                      const std::vector<std::vector<double>>& segments) const {
    int L = static_cast<int>(segments.size());
    if (L < 1) throw ContractError("embed_segments: empty segment list");
    size_t seg_len = static_cast<size_t>(cfg_.window) * cfg_.features;
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(L) * seg_len);
    for (const auto& s : segments) {
        if (s.size() != seg_len)
            throw DimensionError("embed_segments: segment size " + std::to_string(s.size()) +
                                 " != window*features " + std::to_string(seg_len));
        flat.insert(flat.end(), s.begin(), s.end());
    }
    Tensor x = tape.constant({L, cfg_.window, cfg_.features}, std::move(flat));
    for (size_t i = 0; i < conv_w_.size(); ++i) {
        x = tape.conv1d(x, tape.param(*conv_w_[i]), tape.param(*conv_b_[i]), cfg_.conv_stride);
        x = tape.gelu(x);
    }
    Tensor pooled = tape.mean_axis1(x);  // (L, last conv channels)
    return tape.add(tape.matmul(pooled, tape.param(*embed_w_)), tape.param(*embed_b_));
}

Tensor ContextEncoder::attention_layer(ad::Tape& tape, int layer, const Tensor& x, bool training,
                                       Rng* dropout_rng, AttentionDebug* debug) const {
    const LayerParams& lp = layers_[static_cast<size_t>(layer)];
    int L = x.shape()[0];
    int dh = cfg_.head_dim();
    Tensor u = tape.layer_norm(x, tape.param(*lp.ln1_gamma), tape.param(*lp.ln1_beta));
    std::vector<Tensor> head_out;
    for (int h = 0; h < cfg_.heads; ++h) {
        const HeadParams& hp = lp.heads[static_cast<size_t>(h)];
        Tensor q = tape.matmul(u, tape.param(*hp.w_q));
        Tensor k = tape.matmul(u, tape.param(*hp.w_k));
        Tensor v_s = tape.matmul(u, tape.param(*hp.w_v_self));
        Tensor v_g = tape.matmul(u, tape.param(*hp.w_v_gauss));
        Tensor scores = tape.scale(tape.matmul(q, tape.transpose(k)),
                                   1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor s_mat = tape.softmax_rows(scores);
        Tensor sigma_lin = tape.add(tape.matmul(u, tape.param(*hp.w_sigma)),
                                    tape.param(*hp.b_sigma));
        Tensor sigma = tape.add_scalar(tape.softplus(sigma_lin), cfg_.sigma_floor);
        Tensor g_mat = tape.gaussian_rows(sigma, L);
        Tensor z_s = tape.matmul(s_mat, v_s);
        Tensor z_g = tape.matmul(g_mat, v_g);
        Tensor z;
        switch (cfg_.gate_mode) {
            case EncoderConfig::GateMode::self_only:
                z = z_s;
                break;
            case EncoderConfig::GateMode::gaussian_only:
                z = z_g;
                break;
            case EncoderConfig::GateMode::learned: {
                // additive attention over the two branch candidates
                Tensor gw = tape.param(*hp.gate_w);
                Tensor gu = tape.param(*hp.gate_u);
                Tensor gv = tape.param(*hp.gate_v);
                Tensor score_s = tape.matmul(tape.tanh(tape.add(tape.matmul(z_s, gw), gu)), gv);
                Tensor score_g = tape.matmul(tape.tanh(tape.add(tape.matmul(z_g, gw), gu)), gv);
                Tensor alpha_s = tape.sigmoid(tape.sub(score_s, score_g));
                Tensor alpha_g = tape.sigmoid(tape.sub(score_g, score_s));
                z = tape.add(tape.scale_rows(z_s, alpha_s), tape.scale_rows(z_g, alpha_g));
                break;
            }
        }
        if (debug) {
            debug->self_weights.push_back(s_mat.value());
            debug->gaussian_weights.push_back(g_mat.value());
            debug->v_gaussian.push_back(v_g.value());
            debug->z_gaussian.push_back(z_g.value());
        }
        head_out.push_back(z);
    }
    Tensor mixed = tape.concat_last_dim(head_out);
    if (debug) debug->fused = mixed.value();
    if (training && cfg_.dropout > 0.0) {
        if (!dropout_rng) throw ContractError("dropout enabled but no rng supplied");
        mixed = tape.dropout(mixed, cfg_.dropout, *dropout_rng);
    }
    Tensor h1 = tape.add(x, mixed);
    Tensor f = tape.layer_norm(h1, tape.param(*lp.ln2_gamma), tape.param(*lp.ln2_beta));
    f = tape.gelu(tape.add(tape.matmul(f, tape.param(*lp.ffn_w1)), tape.param(*lp.ffn_b1)));
    f = tape.add(tape.matmul(f, tape.param(*lp.ffn_w2)), tape.param(*lp.ffn_b2));
    if (training && cfg_.dropout > 0.0) f = tape.dropout(f, cfg_.dropout, *dropout_rng);
    Tensor out = tape.add(h1, f);
    ad::check_finite(out.value(), "attention layer " + std::to_string(layer));
    return out;
}

Tensor ContextEncoder::forward(ad::Tape& tape, const std::vector<std::vector<double>>& segments,
                               bool training, Rng* dropout_rng,
                               std::vector<AttentionDebug>* debug) const {
    int L = static_cast<int>(segments.size());
    if (L > cfg_.max_segments)
        throw ContractError("encoder capacity exceeded: " + std::to_string(L) + " segments > " +
                            std::to_string(cfg_.max_segments));
    Tensor e = embed_segments(tape, segments);
    Tensor pos = tape.slice_rows(tape.param(*pos_table_), 0, L);
    Tensor x = tape.add(e, pos);
    for (int l = 0; l < cfg_.layers; ++l) {
        AttentionDebug* dbg = nullptr;
        if (debug) {
            debug->emplace_back();
            dbg = &debug->back();
        }
        x = attention_layer(tape, l, x, training, dropout_rng, dbg);
    }
    return tape.layer_norm(x, tape.param(*ln_f_gamma_), tape.param(*ln_f_beta_));
}

}  // namespace conseg::model
