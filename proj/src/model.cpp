#include "tftl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace tftl {

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

int TFTConfig::median_index() const {
    int best = 0;
    double best_dist = 2.0;
    for (int i = 0; i < n_quantiles(); ++i) {
        const double dist = std::abs(quantiles[static_cast<std::size_t>(i)] - 0.5);
        if (dist < best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    return best;
}

void TFTConfig::validate() const {
    require(hidden_size > 0, ErrorKind::Contract, "config: hidden_size must be positive");
    require(attention_heads > 0 && hidden_size % attention_heads == 0, ErrorKind::Contract,
            "config: hidden_size must be divisible by attention_heads");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorKind::Contract,
            "config: dropout_rate must lie in [0,1)");
    require(lookback > 0 && horizon > 0, ErrorKind::Contract,
            "config: lookback and horizon must be positive");
    require(!quantiles.empty(), ErrorKind::Contract, "config: quantile list is empty");
    double prev = 0.0;
    for (double q : quantiles) {
        require(q > 0.0 && q < 1.0, ErrorKind::Contract, "config: quantiles must lie in (0,1)");
        require(q > prev, ErrorKind::Contract, "config: quantiles must be strictly increasing");
        prev = q;
    }
    require(n_unknown > 0, ErrorKind::Contract, "config: n_unknown must be positive");
    require(n_known > 0, ErrorKind::Contract, "config: n_known must be positive");
    require(n_static > 0, ErrorKind::Contract, "config: n_static must be positive");
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

Tensor init_weight(Shape shape, int fan_in, std::uint64_t seed, const std::string& label) {
    RngStream rng(seed, "init." + label);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::random_uniform(std::move(shape), -bound, bound, rng, true);
}

Tensor init_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor init_const(Shape shape, double value) {
    return Tensor::constant(std::move(shape), value, true);
}

GrnParams make_grn(int n_in, int hidden, int n_out, std::uint64_t seed,
                   const std::string& label) {
    GrnParams grn;
    grn.w_in = init_weight({n_in, hidden}, n_in, seed, label + ".w_in");
    grn.b_in = init_zeros({hidden});
    grn.w_out = init_weight({hidden, n_out}, hidden, seed, label + ".w_out");
    grn.b_out = init_zeros({n_out});
    grn.w_gate = init_weight({n_out, n_out}, n_out, seed, label + ".w_gate");
    grn.b_gate = init_zeros({n_out});
    grn.w_val = init_weight({n_out, n_out}, n_out, seed, label + ".w_val");
    grn.b_val = init_zeros({n_out});
    grn.has_skip = n_in != n_out;
    if (grn.has_skip) {
        grn.w_skip = init_weight({n_in, n_out}, n_in, seed, label + ".w_skip");
        grn.b_skip = init_zeros({n_out});
    }
    grn.ln_gain = init_const({n_out}, 1.0);
    grn.ln_bias = init_zeros({n_out});
    return grn;
}

LstmParams make_lstm(int n_in, int d, std::uint64_t seed, const std::string& label) {
    LstmParams lstm;
    lstm.w_ih = init_weight({n_in, 4 * d}, n_in, seed, label + ".w_ih");
    lstm.w_hh = init_weight({d, 4 * d}, d, seed, label + ".w_hh");
    std::vector<double> bias(static_cast<std::size_t>(4 * d), 0.0);
    for (int j = d; j < 2 * d; ++j) {
        bias[static_cast<std::size_t>(j)] = 1.0;  // forget gate open at init
    }
    lstm.bias = Tensor::from({4 * d}, std::move(bias), true);
    return lstm;
}

void append_grn(const std::string& prefix, const GrnParams& grn,
                std::vector<std::pair<std::string, Tensor>>* out) {
    out->push_back({prefix + ".w_in", grn.w_in});
    out->push_back({prefix + ".b_in", grn.b_in});
    out->push_back({prefix + ".w_out", grn.w_out});
    out->push_back({prefix + ".b_out", grn.b_out});
    out->push_back({prefix + ".w_gate", grn.w_gate});
    out->push_back({prefix + ".b_gate", grn.b_gate});
    out->push_back({prefix + ".w_val", grn.w_val});
    out->push_back({prefix + ".b_val", grn.b_val});
    if (grn.has_skip) {
        out->push_back({prefix + ".w_skip", grn.w_skip});
        out->push_back({prefix + ".b_skip", grn.b_skip});
    }
    out->push_back({prefix + ".ln_gain", grn.ln_gain});
    out->push_back({prefix + ".ln_bias", grn.ln_bias});
}

}  // namespace

const std::vector<std::string>& TFTLiteParams::group_names() {
    static const std::vector<std::string> names = {
        "static_embed", "known_embed", "unknown_embed", "varsel_grn", "encoder_lstm",
        "decoder_lstm", "attention",   "post_attn_grn", "output_head"};
    return names;
}

TFTLiteParams TFTLiteParams::init(const TFTConfig& config, std::uint64_t seed) {
    config.validate();
    TFTLiteParams p;
    p.config = config;
    const int d = config.hidden_size;
    const int c = config.n_unknown;
    const int k = config.n_known;
    const int s = config.n_static;
    const int q = config.n_quantiles();

    p.static_w = init_weight({s, d}, s, seed, "static_embed.w");
    p.static_b = init_zeros({d});
    p.known_w = init_weight({k, d}, 1, seed, "known_embed.w");
    p.known_b = init_zeros({k, d});
    p.unknown_w = init_weight({c, d}, 1, seed, "unknown_embed.w");
    p.unknown_b = init_zeros({c, d});
    p.varsel_encoder = make_grn((c + k) * d, d, c + k, seed, "varsel_grn.encoder");
    p.varsel_decoder = make_grn(k * d, d, k, seed, "varsel_grn.decoder");
    p.encoder_lstm = make_lstm(d, d, seed, "encoder_lstm");
    p.decoder_lstm = make_lstm(d, d, seed, "decoder_lstm");
    p.attention.w_q = init_weight({d, d}, d, seed, "attention.w_q");
    p.attention.b_q = init_zeros({d});
    p.attention.w_k = init_weight({d, d}, d, seed, "attention.w_k");
    p.attention.b_k = init_zeros({d});
    p.attention.w_v = init_weight({d, d}, d, seed, "attention.w_v");
    p.attention.b_v = init_zeros({d});
    p.attention.w_out = init_weight({d, d}, d, seed, "attention.w_out");
    p.attention.b_out = init_zeros({d});
    p.post_attn.gate_w = init_weight({d, d}, d, seed, "post_attn_grn.gate_w");
    p.post_attn.gate_b = init_zeros({d});
    p.post_attn.val_w = init_weight({d, d}, d, seed, "post_attn_grn.val_w");
    p.post_attn.val_b = init_zeros({d});
    p.post_attn.ln_gain = init_const({d}, 1.0);
    p.post_attn.ln_bias = init_zeros({d});
    p.post_attn.grn = make_grn(d, d, d, seed, "post_attn_grn.grn");
    p.head_w = init_weight({d, q}, d, seed, "output_head.w");
    p.head_b = init_zeros({q});
    return p;
}

std::vector<std::pair<std::string, Tensor>> TFTLiteParams::group(const std::string& name) const {
    std::vector<std::pair<std::string, Tensor>> out;
    if (name == "static_embed") {
        out = {{"w", static_w}, {"b", static_b}};
    } else if (name == "known_embed") {
        out = {{"w", known_w}, {"b", known_b}};
    } else if (name == "unknown_embed") {
        out = {{"w", unknown_w}, {"b", unknown_b}};
    } else if (name == "varsel_grn") {
        append_grn("encoder", varsel_encoder, &out);
        append_grn("decoder", varsel_decoder, &out);
    } else if (name == "encoder_lstm") {
        out = {{"w_ih", encoder_lstm.w_ih}, {"w_hh", encoder_lstm.w_hh}, {"bias", encoder_lstm.bias}};
    } else if (name == "decoder_lstm") {
        out = {{"w_ih", decoder_lstm.w_ih}, {"w_hh", decoder_lstm.w_hh}, {"bias", decoder_lstm.bias}};
    } else if (name == "attention") {
        out = {{"w_q", attention.w_q}, {"b_q", attention.b_q}, {"w_k", attention.w_k},
               {"b_k", attention.b_k}, {"w_v", attention.w_v}, {"b_v", attention.b_v},
               {"w_out", attention.w_out}, {"b_out", attention.b_out}};
    } else if (name == "post_attn_grn") {
        out = {{"gate_w", post_attn.gate_w}, {"gate_b", post_attn.gate_b},
               {"val_w", post_attn.val_w},   {"val_b", post_attn.val_b},
               {"ln_gain", post_attn.ln_gain}, {"ln_bias", post_attn.ln_bias}};
        append_grn("grn", post_attn.grn, &out);
    } else if (name == "output_head") {
        out = {{"w", head_w}, {"b", head_b}};
    } else {
        raise(ErrorKind::Contract, "unknown parameter group '" + name + "'");
    }
    return out;
}

std::vector<Tensor> TFTLiteParams::group_tensors(const std::string& name) const {
    std::vector<Tensor> out;
    for (auto& [tensor_name, tensor] : group(name)) {
        out.push_back(tensor);
    }
    return out;
}

std::vector<Tensor> TFTLiteParams::all_parameters() const {
    std::vector<Tensor> out;
    for (const std::string& name : group_names()) {
        for (Tensor& t : group_tensors(name)) {
            out.push_back(t);
        }
    }
    return out;
}

std::int64_t TFTLiteParams::group_count(const std::string& name) const {
    std::int64_t n = 0;
    for (const Tensor& t : group_tensors(name)) {
        n += t.size();
    }
    return n;
}

std::int64_t TFTLiteParams::total_count() const {
    std::int64_t n = 0;
    for (const std::string& name : group_names()) {
        n += group_count(name);
    }
    return n;
}

TFTLiteParams TFTLiteParams::clone() const {
    TFTLiteParams copy = TFTLiteParams::init(config, 0);
    for (const std::string& name : group_names()) {
        auto src = group(name);
        auto dst = copy.group(name);
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i].second.values_mut() = src[i].second.values();
        }
    }
    return copy;
}

std::int64_t count_trainable(const TFTLiteParams& params, const FreezePlan& plan) {
    const auto& known = TFTLiteParams::group_names();
    for (const std::string& g : plan.trainable_groups) {
        require(std::find(known.begin(), known.end(), g) != known.end(), ErrorKind::Contract,
                "count_trainable: unknown parameter group '" + g + "'");
    }
    std::int64_t n = 0;
    for (const std::string& g : plan.trainable_groups) {
        n += params.group_count(g);
    }
    return n;
}

// ---------------------------------------------------------------------------
// Forward blocks
// ---------------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = x.rank() == 3 ? matmul3(x, w) : matmul(x, w);
    return add_rowvec(y, b);
}

Tensor grn_forward(const GrnParams& grn, const Tensor& x, double dropout_rate, RngStream& rng,
                   bool dropout_active) {
    Tensor hidden = elu(linear(x, grn.w_in, grn.b_in));
    Tensor pre_gate = linear(hidden, grn.w_out, grn.b_out);
    pre_gate = dropout(pre_gate, dropout_rate, rng, dropout_active);
    Tensor gated = mul(sigmoid(linear(pre_gate, grn.w_gate, grn.b_gate)),
                       linear(pre_gate, grn.w_val, grn.b_val));
    Tensor skip = grn.has_skip ? linear(x, grn.w_skip, grn.b_skip) : x;
    return layer_norm(add(skip, gated), grn.ln_gain, grn.ln_bias);
}

LstmState lstm_cell(const LstmParams& lstm, const Tensor& x, const LstmState& state, int d) {
    Tensor z = add_rowvec(add(matmul(x, lstm.w_ih), matmul(state.h, lstm.w_hh)), lstm.bias);
    Tensor i = sigmoid(slice(z, 1, 0, d));
    Tensor f = sigmoid(slice(z, 1, d, d));
    Tensor g = tanh(slice(z, 1, 2 * d, d));
    Tensor o = sigmoid(slice(z, 1, 3 * d, d));
    LstmState next;
    next.c = add(mul(f, state.c), mul(i, g));
    next.h = mul(o, tanh(next.c));
    return next;
}

Tensor attention_forward(const AttentionParams& attn, const Tensor& queries, const Tensor& memory,
                         int heads, const std::vector<std::uint8_t>& valid, double dropout_rate,
                         RngStream& rng, bool dropout_active) {
    const int d = attn.w_q.dim(1);
    require(heads > 0 && d % heads == 0, ErrorKind::Contract,
            "attention: head count must divide the model width");
    Tensor q = linear(queries, attn.w_q, attn.b_q);
    Tensor k = linear(memory, attn.w_k, attn.b_k);
    Tensor v = linear(memory, attn.w_v, attn.b_v);
    const int dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> contexts;
    contexts.reserve(static_cast<std::size_t>(heads));
    for (int head = 0; head < heads; ++head) {
        Tensor qh = slice(q, 2, head * dh, dh);
        Tensor kh = slice(k, 2, head * dh, dh);
        Tensor vh = slice(v, 2, head * dh, dh);
        Tensor scores = scale(bmm_nt(qh, kh), inv_sqrt_dh);
        Tensor probs = valid.empty() ? softmax(scores) : softmax_masked(scores, valid);
        contexts.push_back(bmm(probs, vh));
    }
    Tensor out = linear(concat(contexts, 2), attn.w_out, attn.b_out);
    return dropout(out, dropout_rate, rng, dropout_active);
}

Tensor varsel_forward(const GrnParams& grn, const Tensor& flat_embeddings, int embed_dim,
                      double dropout_rate, RngStream& rng, bool dropout_active) {
    Tensor weights =
        softmax(grn_forward(grn, flat_embeddings, dropout_rate, rng, dropout_active));
    return varsel_combine(flat_embeddings, weights, embed_dim);
}

namespace {

// Constant input matrix [B, n] gathered from one time step of each window.
Tensor step_matrix(const std::vector<const WindowBatch*>& batch, int step, int width,
                   const std::vector<double> WindowBatch::*field) {
    const int b = static_cast<int>(batch.size());
    std::vector<double> values(static_cast<std::size_t>(b) * width);
    for (int r = 0; r < b; ++r) {
        const std::vector<double>& src = (*batch[static_cast<std::size_t>(r)]).*field;
        std::copy(src.begin() + static_cast<std::size_t>(step) * width,
                  src.begin() + static_cast<std::size_t>(step + 1) * width,
                  values.begin() + static_cast<std::size_t>(r) * width);
    }
    return Tensor::from({b, width}, std::move(values));
}

}  // namespace

Tensor tft_forward_batch(const TFTLiteParams& params, const std::vector<const WindowBatch*>& batch,
                         ForwardMode mode, RngStream& dropout_rng) {
    const TFTConfig& cfg = params.config;
    require(!batch.empty(), ErrorKind::Contract, "tft_forward: empty batch");
    for (const WindowBatch* w : batch) {
        if (w->n_unknown != cfg.n_unknown || w->n_known != cfg.n_known ||
            static_cast<int>(w->static_covariates.size()) != cfg.n_static) {
            raise(ErrorKind::Alignment,
                  "tft_forward: window channel counts (" + std::to_string(w->n_unknown) + "," +
                      std::to_string(w->n_known) +
                      ") do not match the model config; align the frame with "
                      "align_channels against the model's canonical channel list");
        }
        require(w->lookback == cfg.lookback && w->horizon == cfg.horizon, ErrorKind::Contract,
                "tft_forward: window lookback/horizon does not match the config");
    }
    const int b = static_cast<int>(batch.size());
    const int d = cfg.hidden_size;
    const int length = cfg.lookback;
    const int horizon = cfg.horizon;
    const bool dropout_active = mode == ForwardMode::Train || mode == ForwardMode::EvalMC;
    const double rate = cfg.dropout_rate;

    // Static covariates seed both LSTM states.
    Tensor static_in = step_matrix(batch, 0, cfg.n_static, &WindowBatch::static_covariates);
    Tensor static_embed = linear(static_in, params.static_w, params.static_b);

    LstmState state{static_embed, static_embed};
    std::vector<Tensor> encoder_states;
    encoder_states.reserve(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
        Tensor unknown_t = step_matrix(batch, t, cfg.n_unknown, &WindowBatch::encoder_unknown);
        Tensor known_t = step_matrix(batch, t, cfg.n_known, &WindowBatch::encoder_known);
        Tensor flat = concat({channel_embed(unknown_t, params.unknown_w, params.unknown_b),
                              channel_embed(known_t, params.known_w, params.known_b)},
                             1);
        Tensor combined =
            varsel_forward(params.varsel_encoder, flat, d, rate, dropout_rng, dropout_active);
        state = lstm_cell(params.encoder_lstm, combined, state, d);
        encoder_states.push_back(state.h);
    }

    std::vector<Tensor> decoder_states;
    decoder_states.reserve(static_cast<std::size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
        Tensor known_h = step_matrix(batch, h, cfg.n_known, &WindowBatch::decoder_known);
        Tensor flat = channel_embed(known_h, params.known_w, params.known_b);
        Tensor combined =
            varsel_forward(params.varsel_decoder, flat, d, rate, dropout_rng, dropout_active);
        state = lstm_cell(params.decoder_lstm, combined, state, d);
        decoder_states.push_back(state.h);
    }

    // Attention: decoder positions query all encoder steps plus decoder
    // steps up to and including themselves.
    std::vector<Tensor> all_states = encoder_states;
    all_states.insert(all_states.end(), decoder_states.begin(), decoder_states.end());
    Tensor memory = stack_steps(all_states);          // [B, L+H, d]
    Tensor queries_in = stack_steps(decoder_states);  // [B, H, d]

    const int total = length + horizon;
    std::vector<std::uint8_t> causal(static_cast<std::size_t>(horizon) * total, 0);
    for (int i = 0; i < horizon; ++i) {
        for (int t = 0; t <= length + i; ++t) {
            causal[static_cast<std::size_t>(i) * total + t] = 1;
        }
    }
    Tensor attn = attention_forward(params.attention, queries_in, memory, cfg.attention_heads,
                                    causal, rate, dropout_rng, dropout_active);

    // Gated residual around attention, then position-wise GRN enrichment.
    Tensor gated = mul(sigmoid(linear(attn, params.post_attn.gate_w, params.post_attn.gate_b)),
                       linear(attn, params.post_attn.val_w, params.post_attn.val_b));
    Tensor fused = layer_norm(add(queries_in, gated), params.post_attn.ln_gain,
                              params.post_attn.ln_bias);
    Tensor enriched = grn_forward(params.post_attn.grn, fused, rate, dropout_rng, dropout_active);

    return linear(enriched, params.head_w, params.head_b);  // [B, H, Q]
}

std::vector<double> QuantileForecast::series(int qi) const {
    std::vector<double> out(static_cast<std::size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
        out[static_cast<std::size_t>(h)] = value(h, qi);
    }
    return out;
}

QuantileForecast tft_forward(const TFTLiteParams& params, const WindowBatch& window,
                             ForwardMode mode, RngStream& dropout_rng) {
    Tensor raw = tft_forward_batch(params, {&window}, mode, dropout_rng);
    QuantileForecast forecast;
    forecast.horizon = params.config.horizon;
    forecast.quantiles = params.config.quantiles;
    forecast.values.assign(raw.values().begin(), raw.values().end());
    const int q = params.config.n_quantiles();
    for (int h = 0; h < forecast.horizon; ++h) {
        auto row = forecast.values.begin() + static_cast<std::size_t>(h) * q;
        std::sort(row, row + q);  // monotonic repair across quantiles
    }
    return forecast;
}

double quantile_loss(const QuantileForecast& forecast, const std::vector<double>& target,
                     const std::vector<double>& quantiles,
                     const std::vector<std::uint8_t>& loss_mask) {
    require(static_cast<int>(target.size()) == forecast.horizon, ErrorKind::Dimension,
            "quantile_loss: target length does not match the horizon");
    require(quantiles.size() == forecast.quantiles.size(), ErrorKind::Dimension,
            "quantile_loss: quantile count mismatch");
    require(loss_mask.empty() || loss_mask.size() == target.size(), ErrorKind::Dimension,
            "quantile_loss: mask length mismatch");
    double total = 0.0;
    int counted = 0;
    for (int h = 0; h < forecast.horizon; ++h) {
        if (!loss_mask.empty() && !loss_mask[static_cast<std::size_t>(h)]) {
            continue;
        }
        ++counted;
        for (std::size_t qi = 0; qi < quantiles.size(); ++qi) {
            const double e = target[static_cast<std::size_t>(h)] -
                             forecast.value(h, static_cast<int>(qi));
            total += std::max(quantiles[qi] * e, (quantiles[qi] - 1.0) * e);
        }
    }
    if (counted == 0) {
        return 0.0;
    }
    return total / (static_cast<double>(counted) * quantiles.size());
}

// ---------------------------------------------------------------------------
// LSTM baseline
// ---------------------------------------------------------------------------

LstmBaselineParams LstmBaselineParams::init(int hidden_size, int lookback, int horizon,
                                            int n_unknown, int n_known, std::uint64_t seed) {
    require(hidden_size > 0 && lookback > 0 && horizon > 0 && n_unknown > 0 && n_known > 0,
            ErrorKind::Contract, "lstm_baseline: all dimensions must be positive");
    LstmBaselineParams p;
    p.hidden_size = hidden_size;
    p.lookback = lookback;
    p.horizon = horizon;
    p.n_unknown = n_unknown;
    p.n_known = n_known;
    p.lstm = make_lstm(n_unknown + n_known, hidden_size, seed, "baseline_lstm");
    p.head_w = init_weight({hidden_size, horizon}, hidden_size, seed, "baseline_head.w");
    p.head_b = init_zeros({horizon});
    return p;
}

std::vector<Tensor> LstmBaselineParams::all_parameters() const {
    return {lstm.w_ih, lstm.w_hh, lstm.bias, head_w, head_b};
}

Tensor lstm_baseline_forward_batch(const LstmBaselineParams& params,
                                   const std::vector<const WindowBatch*>& batch) {
    require(!batch.empty(), ErrorKind::Contract, "lstm_baseline: empty batch");
    for (const WindowBatch* w : batch) {
        if (w->n_unknown != params.n_unknown || w->n_known != params.n_known) {
            raise(ErrorKind::Alignment,
                  "lstm_baseline: window channel counts do not match the model; align the "
                  "frame with align_channels against the model's canonical channel list");
        }
        require(w->lookback == params.lookback && w->horizon == params.horizon,
                ErrorKind::Contract, "lstm_baseline: window lookback/horizon mismatch");
    }
    const int b = static_cast<int>(batch.size());
    const int d = params.hidden_size;
    LstmState state{Tensor::zeros({b, d}), Tensor::zeros({b, d})};
    for (int t = 0; t < params.lookback; ++t) {
        Tensor unknown_t = step_matrix(batch, t, params.n_unknown, &WindowBatch::encoder_unknown);
        Tensor known_t = step_matrix(batch, t, params.n_known, &WindowBatch::encoder_known);
        Tensor x = concat({unknown_t, known_t}, 1);
        state = lstm_cell(params.lstm, x, state, d);
    }
    return linear(state.h, params.head_w, params.head_b);  // [B, H]
}

std::vector<double> lstm_baseline_forward(const LstmBaselineParams& params,
                                          const WindowBatch& window) {
    Tensor out = lstm_baseline_forward_batch(params, {&window});
    return out.values();
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'F', 'T', 'L', 'C', 'K', 'P', '1'};

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) {
        buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    write_bytes(out, buf, 4);
}

void write_string(std::ofstream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

void write_f64(std::ofstream& out, const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &data[i], 8);
        unsigned char buf[8];
        for (int j = 0; j < 8; ++j) {
            buf[j] = static_cast<unsigned char>((bits >> (8 * j)) & 0xff);
        }
        write_bytes(out, buf, 8);
    }
}

void read_bytes(std::ifstream& in, void* data, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    require(in.gcount() == static_cast<std::streamsize>(n), ErrorKind::Ingestion,
            "checkpoint '" + path + "': truncated");
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    unsigned char buf[4];
    read_bytes(in, buf, 4, path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    }
    return v;
}

std::string read_string(std::ifstream& in, const std::string& path) {
    const std::uint32_t n = read_u32(in, path);
    require(n < (1u << 20), ErrorKind::Ingestion, "checkpoint '" + path + "': oversized string");
    std::string s(n, '\0');
    read_bytes(in, s.data(), n, path);
    return s;
}

void read_f64(std::ifstream& in, double* data, std::size_t n, const std::string& path) {
    for (std::size_t i = 0; i < n; ++i) {
        unsigned char buf[8];
        read_bytes(in, buf, 8, path);
        std::uint64_t bits = 0;
        for (int j = 0; j < 8; ++j) {
            bits |= static_cast<std::uint64_t>(buf[j]) << (8 * j);
        }
        std::memcpy(&data[i], &bits, 8);
    }
}

nlohmann::json config_to_json(const TFTConfig& cfg, const std::vector<Channel>& channels) {
    nlohmann::json j;
    j["hidden_size"] = cfg.hidden_size;
    j["attention_heads"] = cfg.attention_heads;
    j["dropout_rate"] = cfg.dropout_rate;
    j["lookback"] = cfg.lookback;
    j["horizon"] = cfg.horizon;
    j["quantiles"] = cfg.quantiles;
    j["n_unknown"] = cfg.n_unknown;
    j["n_known"] = cfg.n_known;
    j["n_static"] = cfg.n_static;
    nlohmann::json chans = nlohmann::json::array();
    for (const Channel& c : channels) {
        chans.push_back({{"name", c.name}, {"kind", channel_kind_name(c.kind)}});
    }
    j["channels"] = chans;
    return j;
}

void config_from_json(const nlohmann::json& j, TFTConfig* cfg, std::vector<Channel>* channels) {
    cfg->hidden_size = j.at("hidden_size").get<int>();
    cfg->attention_heads = j.at("attention_heads").get<int>();
    cfg->dropout_rate = j.at("dropout_rate").get<double>();
    cfg->lookback = j.at("lookback").get<int>();
    cfg->horizon = j.at("horizon").get<int>();
    cfg->quantiles = j.at("quantiles").get<std::vector<double>>();
    cfg->n_unknown = j.at("n_unknown").get<int>();
    cfg->n_known = j.at("n_known").get<int>();
    cfg->n_static = j.at("n_static").get<int>();
    channels->clear();
    for (const auto& c : j.at("channels")) {
        Channel channel;
        channel.name = c.at("name").get<std::string>();
        channel.kind = channel_kind_from_name(c.at("kind").get<std::string>());
        channels->push_back(std::move(channel));
    }
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::Contract, "cannot open '" + path + "' for writing");
    write_bytes(out, kMagic, sizeof(kMagic));
    write_string(out, config_to_json(checkpoint.params.config,
                                     checkpoint.canonical_channels)
                          .dump());
    const auto& names = TFTLiteParams::group_names();
    write_u32(out, static_cast<std::uint32_t>(names.size()));
    for (const std::string& group_name : names) {
        write_string(out, group_name);
        const auto tensors = checkpoint.params.group(group_name);
        write_u32(out, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& [tensor_name, tensor] : tensors) {
            write_string(out, tensor_name);
            write_u32(out, static_cast<std::uint32_t>(tensor.shape().size()));
            for (int dim : tensor.shape()) {
                write_u32(out, static_cast<std::uint32_t>(dim));
            }
            write_f64(out, tensor.values().data(), tensor.values().size());
        }
    }
    require(out.good(), ErrorKind::Contract, "failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::Contract, "cannot open checkpoint '" + path + "'");
    char magic[8];
    read_bytes(in, magic, sizeof(magic), path);
    require(std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::Ingestion,
            "checkpoint '" + path + "': bad magic or unsupported format version");
    TFTConfig cfg;
    std::vector<Channel> channels;
    try {
        config_from_json(nlohmann::json::parse(read_string(in, path)), &cfg, &channels);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Ingestion, "checkpoint '" + path + "': bad config blob: " + e.what());
    }
    Checkpoint checkpoint;
    checkpoint.params = TFTLiteParams::init(cfg, 0);
    checkpoint.canonical_channels = std::move(channels);

    const std::uint32_t n_groups = read_u32(in, path);
    require(n_groups == TFTLiteParams::group_names().size(), ErrorKind::Ingestion,
            "checkpoint '" + path + "': group count mismatch");
    for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
        const std::string group_name = read_string(in, path);
        auto tensors = checkpoint.params.group(group_name);
        const std::uint32_t n_tensors = read_u32(in, path);
        require(n_tensors == tensors.size(), ErrorKind::Ingestion,
                "checkpoint '" + path + "': tensor count mismatch in group '" + group_name + "'");
        for (std::uint32_t ti = 0; ti < n_tensors; ++ti) {
            const std::string tensor_name = read_string(in, path);
            require(tensor_name == tensors[ti].first, ErrorKind::Ingestion,
                    "checkpoint '" + path + "': unexpected tensor '" + tensor_name + "'");
            const std::uint32_t rank = read_u32(in, path);
            Shape shape(rank);
            for (std::uint32_t r = 0; r < rank; ++r) {
                shape[r] = static_cast<int>(read_u32(in, path));
            }
            Tensor dst = tensors[ti].second;
            require(shape == dst.shape(), ErrorKind::Ingestion,
                    "checkpoint '" + path + "': shape mismatch for '" + tensor_name + "'");
            read_f64(in, dst.values_mut().data(), dst.values_mut().size(), path);
        }
    }
    return checkpoint;
}

}  // namespace tftl
