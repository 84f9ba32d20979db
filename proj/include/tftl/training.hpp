#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tftl/freeze.hpp"
#include "tftl/metrics.hpp"
#include "tftl/model.hpp"
#include "tftl/windows.hpp"

namespace tftl {

struct TrainConfig {
    double lr = 1e-3;
    int max_epochs = 60;
    int patience = 5;
    double clip_norm = 0.1;
    int batch_size = 64;
    std::uint64_t seed = 0;

    // lr == 0 is a valid "no update" run (the optimizer step is skipped);
    // negative rates are rejected.
    void validate() const {
        require(lr >= 0.0, ErrorKind::Contract, "train config: lr must be non-negative");
        require(max_epochs > 0 && patience > 0 && batch_size > 0 && clip_norm > 0.0,
                ErrorKind::Contract, "train config: all limits must be positive");
        require(patience <= max_epochs, ErrorKind::Contract,
                "train config: patience must not exceed max_epochs");
    }
};

struct RunRecord {
    std::string model_id;
    std::string strategy;
    std::uint64_t seed = 0;
    int epochs_run = 0;
    double best_val_loss = 0.0;
    std::string checkpoint_ref;
    double wall_time_sec = 0.0;
};

// In-place training with early stopping on validation quantile loss
// (patience = consecutive non-improving epochs) and best-epoch restore.
// Gradient updates apply exactly to the plan's trainable groups.
RunRecord train_model(TFTLiteParams* params, const FreezePlan& plan,
                      const std::vector<WindowBatch>& train_windows,
                      const std::vector<WindowBatch>& val_windows, const TrainConfig& config,
                      const std::string& model_id);

// Pooled masked quantile loss over windows, dropout off.
double eval_quantile_loss(const TFTLiteParams& params, const std::vector<WindowBatch>& windows,
                          int batch_size = 64);

// Pooled MAE of the median-quantile prediction.
double eval_median_mae(const TFTLiteParams& params, const std::vector<WindowBatch>& windows,
                       int batch_size = 64);

// Full point-metric report of the median-quantile prediction over windows.
MetricsReport evaluate_model(const TFTLiteParams& params, const std::vector<WindowBatch>& windows,
                             const std::string& model_id, const std::string& domain,
                             int batch_size = 64);

struct SourceTrainResult {
    Checkpoint checkpoint;
    double mae_source_val = 0.0;
    RunRecord record;
};

SourceTrainResult train_source(const TFTConfig& config,
                               const std::vector<Channel>& canonical_channels,
                               const std::vector<WindowBatch>& train_windows,
                               const std::vector<WindowBatch>& val_windows,
                               const TrainConfig& train_config);

struct FineTuneResult {
    TFTLiteParams params;
    RunRecord record;
};

// Fine-tunes from a checkpoint with fresh optimizer state; the fine-tune pool
// is split 90/10 chronologically for early-stopping validation.
FineTuneResult fine_tune(const Checkpoint& checkpoint, const FreezePlan& plan,
                         const std::vector<WindowBatch>& ft_pool, const TrainConfig& config);

// Evaluation of a source checkpoint on target windows without any updates.
MetricsReport direct_transfer_eval(const Checkpoint& checkpoint,
                                   const std::vector<WindowBatch>& test_windows,
                                   const std::string& domain);

// Seasonal-naive forecast: prediction(t+h) = value(t+h-24) of the aggregate
// channel; origin t must be at least 24 hours into the frame.
std::vector<double> persistence_forecast(const TimeSeriesFrame& frame, int origin_row,
                                         int horizon);

MetricsReport evaluate_persistence(const TimeSeriesFrame& frame,
                                   const std::vector<WindowBatch>& test_windows,
                                   const std::string& domain);

// --- LSTM-from-scratch baseline -----------------------------------------------

struct LstmBaselineResult {
    LstmBaselineParams params;
    RunRecord record;
};

// Plain LSTM trained with masked MAE loss for a fixed epoch budget.
LstmBaselineResult train_lstm_baseline(int hidden_size,
                                       const std::vector<WindowBatch>& train_windows,
                                       const TrainConfig& config, int epochs = 30);

MetricsReport evaluate_lstm_baseline(const LstmBaselineParams& params,
                                     const std::vector<WindowBatch>& windows,
                                     const std::string& domain, int batch_size = 64);

// --- data-scarcity protocol ----------------------------------------------------

struct ScarcityRow {
    std::string label;
    int hours = 0;
    bool clamped = false;  // requested window exceeded the pool
    double median_mae = 0.0;
    double tri = 0.0;
    std::vector<double> seed_maes;
};

// Fine-tunes the source checkpoint with FullFinetune on chronological prefixes
// of the fine-tune pool (one run per seed, fresh optimizer state), evaluating
// every run on the same fixed test windows. window_hours entries <= 0 mean
// "all available data"; larger-than-pool requests clamp to the pool with a flag.
std::vector<ScarcityRow> scarcity_sweep(const Checkpoint& checkpoint,
                                        const TimeSeriesFrame& ft_frame,
                                        const std::vector<int>& window_hours,
                                        const std::vector<std::uint64_t>& seeds,
                                        const TrainConfig& scarcity_config,
                                        const std::vector<WindowBatch>& test_windows,
                                        double mae_source_val,
                                        const std::vector<double>& static_covariates,
                                        int stride = 1);

}  // namespace tftl
