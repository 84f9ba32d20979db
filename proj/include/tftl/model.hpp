#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tftl/freeze.hpp"
#include "tftl/tensor.hpp"
#include "tftl/timeseries.hpp"
#include "tftl/windows.hpp"

namespace tftl {

struct TFTConfig {
    int hidden_size = 64;
    int attention_heads = 4;
    double dropout_rate = 0.1;
    int lookback = 168;
    int horizon = 24;
    std::vector<double> quantiles = {0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98};
    int n_unknown = 0;  // C: target components + unknown covariates
    int n_known = 0;    // K: calendar features + known covariate channels
    int n_static = 1;   // S: building identifier

    int n_quantiles() const { return static_cast<int>(quantiles.size()); }
    int median_index() const;  // index of the quantile closest to 0.5
    void validate() const;
};

// --- parameter blocks -------------------------------------------------------

struct GrnParams {
    Tensor w_in, b_in;      // n_in -> hidden
    Tensor w_out, b_out;    // hidden -> n_out
    Tensor w_gate, b_gate;  // n_out -> n_out, sigmoid arm of the gate
    Tensor w_val, b_val;    // n_out -> n_out, value arm
    Tensor w_skip, b_skip;  // n_in -> n_out residual projection (when dims differ)
    Tensor ln_gain, ln_bias;
    bool has_skip = false;
};

struct LstmParams {
    Tensor w_ih;  // input -> 4d, gate order i,f,g,o
    Tensor w_hh;  // d -> 4d
    Tensor bias;  // 4d, forget gate initialized to 1
};

struct AttentionParams {
    Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_out, b_out;
};

struct PostAttnParams {
    Tensor gate_w, gate_b;  // gated residual around the attention output
    Tensor val_w, val_b;
    Tensor ln_gain, ln_bias;
    GrnParams grn;  // position-wise enrichment, d -> d
};

// Named parameter groups partition the full set; freezing, counting and the
// checkpoint format all key off these names.
struct TFTLiteParams {
    TFTConfig config;

    Tensor static_w, static_b;    // group static_embed
    Tensor known_w, known_b;      // group known_embed
    Tensor unknown_w, unknown_b;  // group unknown_embed
    GrnParams varsel_encoder;     // group varsel_grn (with varsel_decoder)
    GrnParams varsel_decoder;
    LstmParams encoder_lstm;  // group encoder_lstm
    LstmParams decoder_lstm;  // group decoder_lstm
    AttentionParams attention;  // group attention
    PostAttnParams post_attn;   // group post_attn_grn
    Tensor head_w, head_b;      // group output_head, d x |Q| + |Q|

    static const std::vector<std::string>& group_names();
    static TFTLiteParams init(const TFTConfig& config, std::uint64_t seed);

    // (tensor name, tensor) pairs for one group; Contract error on unknown names.
    std::vector<std::pair<std::string, Tensor>> group(const std::string& name) const;
    std::vector<Tensor> group_tensors(const std::string& name) const;
    std::vector<Tensor> all_parameters() const;
    std::int64_t group_count(const std::string& name) const;
    std::int64_t total_count() const;
    TFTLiteParams clone() const;  // deep copy with fresh storage
};

std::int64_t count_trainable(const TFTLiteParams& params, const FreezePlan& plan);

// --- layer building blocks ----------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor grn_forward(const GrnParams& grn, const Tensor& x, double dropout_rate, RngStream& rng,
                   bool dropout_active);

struct LstmState {
    Tensor h;
    Tensor c;
};
LstmState lstm_cell(const LstmParams& lstm, const Tensor& x, const LstmState& state, int d);

// Scaled-dot-product multi-head attention with an optional validity mask of
// shape [n_queries, n_memory]; dropout applies to the projected output.
Tensor attention_forward(const AttentionParams& attn, const Tensor& queries, const Tensor& memory,
                         int heads, const std::vector<std::uint8_t>& valid, double dropout_rate,
                         RngStream& rng, bool dropout_active);

// Variable selection over per-variable embeddings: GRN -> softmax -> weighted
// mixdown back to the embedding dimension.
Tensor varsel_forward(const GrnParams& grn, const Tensor& flat_embeddings, int embed_dim,
                      double dropout_rate, RngStream& rng, bool dropout_active);

// --- forward pass ------------------------------------------------------------

enum class ForwardMode { Train, Eval, EvalMC };

// Per-horizon-step quantile predictions after monotonic repair (each row
// sorted ascending; the median keeps its rank position by construction).
struct QuantileForecast {
    int horizon = 0;
    std::vector<double> quantiles;
    std::vector<double> values;  // horizon x |Q| row-major

    double value(int h, int qi) const {
        return values[static_cast<std::size_t>(h) * quantiles.size() + qi];
    }
    std::vector<double> series(int qi) const;
};

// Batched forward over whole windows; returns raw (unrepaired) head outputs
// of shape [B, H, Q]. Dropout is active in Train and EvalMC modes.
Tensor tft_forward_batch(const TFTLiteParams& params, const std::vector<const WindowBatch*>& batch,
                         ForwardMode mode, RngStream& dropout_rng);

QuantileForecast tft_forward(const TFTLiteParams& params, const WindowBatch& window,
                             ForwardMode mode, RngStream& dropout_rng);

// Mean pinball loss over horizon steps and quantiles; loss-masked steps are
// excluded when a mask is supplied.
double quantile_loss(const QuantileForecast& forecast, const std::vector<double>& target,
                     const std::vector<double>& quantiles,
                     const std::vector<std::uint8_t>& loss_mask = {});

// --- LSTM-from-scratch baseline ----------------------------------------------

struct LstmBaselineParams {
    int hidden_size = 64;
    int lookback = 168;
    int horizon = 24;
    int n_unknown = 0;
    int n_known = 0;
    LstmParams lstm;          // (C + K) -> hidden
    Tensor head_w, head_b;  // hidden -> horizon

    static LstmBaselineParams init(int hidden_size, int lookback, int horizon, int n_unknown,
                                   int n_known, std::uint64_t seed);
    std::vector<Tensor> all_parameters() const;
};

Tensor lstm_baseline_forward_batch(const LstmBaselineParams& params,
                                   const std::vector<const WindowBatch*>& batch);
std::vector<double> lstm_baseline_forward(const LstmBaselineParams& params,
                                          const WindowBatch& window);

// --- checkpoints ---------------------------------------------------------------

// Binary container: magic + format version, config JSON blob, named groups of
// named tensors with raw little-endian float64 payloads. Save -> load -> save
// is byte-stable.
struct Checkpoint {
    TFTLiteParams params;
    std::vector<Channel> canonical_channels;  // alignment contract for frames
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace tftl
