#include "tftl/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "tftl/optimizer.hpp"

namespace tftl {

namespace {

std::vector<const WindowBatch*> chunk_pointers(const std::vector<WindowBatch>& windows,
                                               const std::vector<int>& order, int begin, int end) {
    std::vector<const WindowBatch*> out;
    out.reserve(static_cast<std::size_t>(end - begin));
    for (int i = begin; i < end; ++i) {
        out.push_back(&windows[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    }
    return out;
}

void gather_targets(const std::vector<const WindowBatch*>& batch, std::vector<double>* target,
                    std::vector<std::uint8_t>* mask) {
    target->clear();
    mask->clear();
    for (const WindowBatch* w : batch) {
        target->insert(target->end(), w->target.begin(), w->target.end());
        mask->insert(mask->end(), w->loss_mask.begin(), w->loss_mask.end());
    }
}

std::int64_t valid_count(const std::vector<std::uint8_t>& mask) {
    std::int64_t n = 0;
    for (std::uint8_t m : mask) {
        n += m ? 1 : 0;
    }
    return n;
}

struct Snapshot {
    std::vector<std::vector<double>> values;
};

Snapshot take_snapshot(const std::vector<Tensor>& params) {
    Snapshot snap;
    snap.values.reserve(params.size());
    for (const Tensor& p : params) {
        snap.values.push_back(p.values());
    }
    return snap;
}

void restore_snapshot(const Snapshot& snap, const std::vector<Tensor>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i].values_mut() = snap.values[i];
    }
}

void fisher_yates(std::vector<int>* order, RngStream& rng) {
    for (std::size_t i = order->size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap((*order)[i - 1], (*order)[j]);
    }
}

}  // namespace

RunRecord train_model(TFTLiteParams* params, const FreezePlan& plan,
                      const std::vector<WindowBatch>& train_windows,
                      const std::vector<WindowBatch>& val_windows, const TrainConfig& config,
                      const std::string& model_id) {
    config.validate();
    require(params != nullptr, ErrorKind::Contract, "train_model: null params");
    require(!train_windows.empty() && !val_windows.empty(), ErrorKind::Contract,
            "train_model: empty window sets");
    const auto started = std::chrono::steady_clock::now();

    std::vector<Tensor> trainable;
    for (const std::string& group : plan.trainable_groups) {
        for (Tensor& t : params->group_tensors(group)) {
            trainable.push_back(t);
        }
    }
    require(!trainable.empty(), ErrorKind::Contract, "train_model: plan trains no parameters");
    const std::vector<Tensor> all_params = params->all_parameters();

    AdamState adam(trainable);
    const int n_train = static_cast<int>(train_windows.size());
    const int n_batches = (n_train + config.batch_size - 1) / config.batch_size;

    double best_val = eval_quantile_loss(*params, val_windows, config.batch_size);
    Snapshot best = take_snapshot(all_params);
    int epochs_run = 0;
    int bad_epochs = 0;

    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::vector<double> target;
    std::vector<std::uint8_t> mask;
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        for (int i = 0; i < n_train; ++i) {
            order[static_cast<std::size_t>(i)] = i;
        }
        RngStream shuffle_rng(config.seed, "train.shuffle", static_cast<std::uint64_t>(epoch));
        fisher_yates(&order, shuffle_rng);

        for (int b = 0; b < n_batches; ++b) {
            const int begin = b * config.batch_size;
            const int end = std::min(n_train, begin + config.batch_size);
            auto batch = chunk_pointers(train_windows, order, begin, end);
            gather_targets(batch, &target, &mask);
            if (valid_count(mask) == 0) {
                continue;
            }
            for (const Tensor& p : all_params) {
                p.zero_grad();
            }
            Tape tape;
            RngStream dropout_rng(config.seed, "train.dropout",
                                  static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                      static_cast<std::uint64_t>(b));
            {
                TapeScope scope(tape);
                Tensor out = tft_forward_batch(*params, batch, ForwardMode::Train, dropout_rng);
                Tensor loss = pinball_loss(out, target, mask, params->config.quantiles);
                tape.backward(loss);
            }
            grad_clip_global(trainable, config.clip_norm);
            if (config.lr > 0.0) {
                adam.step(trainable, config.lr);
            }
        }
        ++epochs_run;

        const double val = eval_quantile_loss(*params, val_windows, config.batch_size);
        if (val < best_val) {
            best_val = val;
            best = take_snapshot(all_params);
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= config.patience) {
                break;
            }
        }
    }
    restore_snapshot(best, all_params);

    RunRecord record;
    record.model_id = model_id;
    record.strategy = strategy_name(plan.strategy);
    record.seed = config.seed;
    record.epochs_run = epochs_run;
    record.best_val_loss = best_val;
    record.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

namespace {

// Shared pooled-evaluation walk: calls visit(batch, raw_outputs) per chunk.
template <typename Visit>
void eval_chunks(const TFTLiteParams& params, const std::vector<WindowBatch>& windows,
                 int batch_size, Visit visit) {
    require(!windows.empty(), ErrorKind::Contract, "evaluation: empty window set");
    RngStream unused(0);
    const int n = static_cast<int>(windows.size());
    for (int begin = 0; begin < n; begin += batch_size) {
        const int end = std::min(n, begin + batch_size);
        std::vector<const WindowBatch*> batch;
        batch.reserve(static_cast<std::size_t>(end - begin));
        for (int i = begin; i < end; ++i) {
            batch.push_back(&windows[static_cast<std::size_t>(i)]);
        }
        Tensor out = tft_forward_batch(params, batch, ForwardMode::Eval, unused);
        visit(batch, out);
    }
}

}  // namespace

double eval_quantile_loss(const TFTLiteParams& params, const std::vector<WindowBatch>& windows,
                          int batch_size) {
    const std::vector<double>& quantiles = params.config.quantiles;
    const int n_q = static_cast<int>(quantiles.size());
    double total = 0.0;
    std::int64_t counted = 0;
    eval_chunks(params, windows, batch_size,
                [&](const std::vector<const WindowBatch*>& batch, const Tensor& out) {
                    const int horizon = params.config.horizon;
                    for (std::size_t r = 0; r < batch.size(); ++r) {
                        const WindowBatch* w = batch[r];
                        for (int h = 0; h < horizon; ++h) {
                            if (!w->loss_mask[static_cast<std::size_t>(h)]) {
                                continue;
                            }
                            ++counted;
                            for (int q = 0; q < n_q; ++q) {
                                const double e =
                                    w->target[static_cast<std::size_t>(h)] -
                                    out.at(static_cast<int>(r), h, q);
                                total += std::max(quantiles[static_cast<std::size_t>(q)] * e,
                                                  (quantiles[static_cast<std::size_t>(q)] - 1.0) * e);
                            }
                        }
                    }
                });
    require(counted > 0, ErrorKind::Contract, "eval_quantile_loss: no valid target steps");
    return total / (static_cast<double>(counted) * n_q);
}

namespace {

void gather_median_predictions(const TFTLiteParams& params,
                               const std::vector<WindowBatch>& windows, int batch_size,
                               std::vector<double>* pred, std::vector<double>* truth,
                               std::vector<std::uint8_t>* mask) {
    // Median after monotonic repair: the median-index order statistic of the
    // raw quantile row, matching what tft_forward reports.
    const int median = params.config.median_index();
    const int n_q = params.config.n_quantiles();
    std::vector<double> row(static_cast<std::size_t>(n_q));
    eval_chunks(params, windows, batch_size,
                [&](const std::vector<const WindowBatch*>& batch, const Tensor& out) {
                    for (std::size_t r = 0; r < batch.size(); ++r) {
                        const WindowBatch* w = batch[r];
                        for (int h = 0; h < params.config.horizon; ++h) {
                            for (int q = 0; q < n_q; ++q) {
                                row[static_cast<std::size_t>(q)] =
                                    out.at(static_cast<int>(r), h, q);
                            }
                            std::nth_element(row.begin(), row.begin() + median, row.end());
                            pred->push_back(row[static_cast<std::size_t>(median)]);
                            truth->push_back(w->target[static_cast<std::size_t>(h)]);
                            mask->push_back(w->loss_mask[static_cast<std::size_t>(h)]);
                        }
                    }
                });
}

}  // namespace

double eval_median_mae(const TFTLiteParams& params, const std::vector<WindowBatch>& windows,
                       int batch_size) {
    std::vector<double> pred;
    std::vector<double> truth;
    std::vector<std::uint8_t> mask;
    gather_median_predictions(params, windows, batch_size, &pred, &truth, &mask);
    return mae(pred, truth, mask);
}

MetricsReport evaluate_model(const TFTLiteParams& params, const std::vector<WindowBatch>& windows,
                             const std::string& model_id, const std::string& domain,
                             int batch_size) {
    std::vector<double> pred;
    std::vector<double> truth;
    std::vector<std::uint8_t> mask;
    gather_median_predictions(params, windows, batch_size, &pred, &truth, &mask);
    return compute_point_metrics(pred, truth, mask, model_id, domain);
}

SourceTrainResult train_source(const TFTConfig& config,
                               const std::vector<Channel>& canonical_channels,
                               const std::vector<WindowBatch>& train_windows,
                               const std::vector<WindowBatch>& val_windows,
                               const TrainConfig& train_config) {
    SourceTrainResult result;
    result.checkpoint.params = TFTLiteParams::init(config, train_config.seed);
    result.checkpoint.canonical_channels = canonical_channels;
    result.record = train_model(&result.checkpoint.params,
                                FreezePlan::for_strategy(Strategy::FullFinetune), train_windows,
                                val_windows, train_config, "source");
    result.mae_source_val =
        eval_median_mae(result.checkpoint.params, val_windows, train_config.batch_size);
    return result;
}

FineTuneResult fine_tune(const Checkpoint& checkpoint, const FreezePlan& plan,
                         const std::vector<WindowBatch>& ft_pool, const TrainConfig& config) {
    require(ft_pool.size() >= 2, ErrorKind::Contract,
            "fine_tune: pool must hold at least two windows");
    FineTuneResult result;
    result.params = checkpoint.params.clone();
    // Chronological 90/10 split of the pool for early-stopping validation.
    const int n = static_cast<int>(ft_pool.size());
    const int split = std::max(1, n - std::max(1, n / 10));
    std::vector<WindowBatch> train(ft_pool.begin(), ft_pool.begin() + split);
    std::vector<WindowBatch> val(ft_pool.begin() + split, ft_pool.end());
    result.record = train_model(&result.params, plan, train, val, config,
                                strategy_name(plan.strategy));
    return result;
}

MetricsReport direct_transfer_eval(const Checkpoint& checkpoint,
                                   const std::vector<WindowBatch>& test_windows,
                                   const std::string& domain) {
    return evaluate_model(checkpoint.params, test_windows, "DirectTransfer", domain);
}

std::vector<double> persistence_forecast(const TimeSeriesFrame& frame, int origin_row,
                                         int horizon) {
    require(origin_row >= 23, ErrorKind::Contract,
            "persistence_forecast: origin must be at least 24 hours into the frame");
    const int target_col = frame.channel_index(kAggregateTargetChannel);
    require(target_col >= 0, ErrorKind::Contract,
            "persistence_forecast: frame lacks the aggregate target channel");
    require(origin_row + horizon <= frame.rows(), ErrorKind::Contract,
            "persistence_forecast: horizon extends past the frame");
    std::vector<double> out(static_cast<std::size_t>(horizon));
    for (int h = 1; h <= horizon; ++h) {
        out[static_cast<std::size_t>(h - 1)] = frame.value(origin_row + h - 24, target_col);
    }
    return out;
}

MetricsReport evaluate_persistence(const TimeSeriesFrame& frame,
                                   const std::vector<WindowBatch>& test_windows,
                                   const std::string& domain) {
    require(!test_windows.empty(), ErrorKind::Contract, "evaluate_persistence: no windows");
    const int target_col = frame.channel_index(kAggregateTargetChannel);
    require(target_col >= 0, ErrorKind::Contract,
            "evaluate_persistence: frame lacks the aggregate target channel");
    std::vector<double> pred;
    std::vector<double> truth;
    std::vector<std::uint8_t> mask;
    for (const WindowBatch& w : test_windows) {
        const int origin = w.start_row + w.lookback - 1;
        std::vector<double> p = persistence_forecast(frame, origin, w.horizon);
        for (int h = 0; h < w.horizon; ++h) {
            pred.push_back(p[static_cast<std::size_t>(h)]);
            truth.push_back(w.target[static_cast<std::size_t>(h)]);
            const bool ref_ok = frame.observed(origin + 1 + h - 24, target_col);
            mask.push_back(w.loss_mask[static_cast<std::size_t>(h)] && ref_ok ? 1 : 0);
        }
    }
    return compute_point_metrics(pred, truth, mask, "Persistence", domain);
}

// ---------------------------------------------------------------------------
// LSTM baseline
// ---------------------------------------------------------------------------

LstmBaselineResult train_lstm_baseline(int hidden_size,
                                       const std::vector<WindowBatch>& train_windows,
                                       const TrainConfig& config, int epochs) {
    config.validate();
    require(!train_windows.empty(), ErrorKind::Contract, "lstm baseline: no training windows");
    require(epochs > 0, ErrorKind::Contract, "lstm baseline: epochs must be positive");
    const auto started = std::chrono::steady_clock::now();
    const WindowBatch& first = train_windows.front();
    LstmBaselineResult result;
    result.params = LstmBaselineParams::init(hidden_size, first.lookback, first.horizon,
                                             first.n_unknown, first.n_known, config.seed);
    std::vector<Tensor> trainable = result.params.all_parameters();
    AdamState adam(trainable);

    const int n_train = static_cast<int>(train_windows.size());
    const int n_batches = (n_train + config.batch_size - 1) / config.batch_size;
    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::vector<double> target;
    std::vector<std::uint8_t> mask;
    double last_loss = 0.0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (int i = 0; i < n_train; ++i) {
            order[static_cast<std::size_t>(i)] = i;
        }
        RngStream shuffle_rng(config.seed, "lstm.shuffle", static_cast<std::uint64_t>(epoch));
        fisher_yates(&order, shuffle_rng);
        for (int b = 0; b < n_batches; ++b) {
            const int begin = b * config.batch_size;
            const int end = std::min(n_train, begin + config.batch_size);
            auto batch = chunk_pointers(train_windows, order, begin, end);
            gather_targets(batch, &target, &mask);
            if (valid_count(mask) == 0) {
                continue;
            }
            for (const Tensor& p : trainable) {
                p.zero_grad();
            }
            Tape tape;
            {
                TapeScope scope(tape);
                Tensor out = lstm_baseline_forward_batch(result.params, batch);
                Tensor loss = mae_loss(out, target, mask);
                last_loss = loss.item();
                tape.backward(loss);
            }
            grad_clip_global(trainable, config.clip_norm);
            if (config.lr > 0.0) {
                adam.step(trainable, config.lr);
            }
        }
    }
    result.record.model_id = "LSTM";
    result.record.strategy = "scratch";
    result.record.seed = config.seed;
    result.record.epochs_run = epochs;
    result.record.best_val_loss = last_loss;
    result.record.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

MetricsReport evaluate_lstm_baseline(const LstmBaselineParams& params,
                                     const std::vector<WindowBatch>& windows,
                                     const std::string& domain, int batch_size) {
    require(!windows.empty(), ErrorKind::Contract, "lstm baseline evaluation: no windows");
    std::vector<double> pred;
    std::vector<double> truth;
    std::vector<std::uint8_t> mask;
    const int n = static_cast<int>(windows.size());
    for (int begin = 0; begin < n; begin += batch_size) {
        const int end = std::min(n, begin + batch_size);
        std::vector<const WindowBatch*> batch;
        for (int i = begin; i < end; ++i) {
            batch.push_back(&windows[static_cast<std::size_t>(i)]);
        }
        Tensor out = lstm_baseline_forward_batch(params, batch);
        for (std::size_t r = 0; r < batch.size(); ++r) {
            const WindowBatch* w = batch[r];
            for (int h = 0; h < w->horizon; ++h) {
                pred.push_back(out.at(static_cast<int>(r), h));
                truth.push_back(w->target[static_cast<std::size_t>(h)]);
                mask.push_back(w->loss_mask[static_cast<std::size_t>(h)]);
            }
        }
    }
    return compute_point_metrics(pred, truth, mask, "LSTM", domain);
}

// ---------------------------------------------------------------------------
// Scarcity sweep
// ---------------------------------------------------------------------------

std::vector<ScarcityRow> scarcity_sweep(const Checkpoint& checkpoint,
                                        const TimeSeriesFrame& ft_frame,
                                        const std::vector<int>& window_hours,
                                        const std::vector<std::uint64_t>& seeds,
                                        const TrainConfig& scarcity_config,
                                        const std::vector<WindowBatch>& test_windows,
                                        double mae_source_val,
                                        const std::vector<double>& static_covariates,
                                        int stride) {
    require(!seeds.empty(), ErrorKind::Contract, "scarcity_sweep: no seeds");
    const int pool_hours = ft_frame.rows();
    const int lookback = checkpoint.params.config.lookback;
    const int horizon = checkpoint.params.config.horizon;

    std::vector<ScarcityRow> rows;
    for (int requested : window_hours) {
        ScarcityRow row;
        row.hours = requested <= 0 || requested >= pool_hours ? pool_hours : requested;
        row.clamped = requested > pool_hours;
        row.label = requested <= 0 || requested >= pool_hours
                        ? "all"
                        : std::to_string(requested) + "h";
        require(row.hours >= lookback + horizon, ErrorKind::Contract,
                "scarcity_sweep: window of " + std::to_string(row.hours) +
                    " hours cannot produce a single training window");
        TimeSeriesFrame prefix = slice_rows(ft_frame, 0, row.hours);
        std::vector<WindowBatch> pool =
            make_windows(prefix, lookback, horizon, stride, static_covariates);
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            TrainConfig run_config = scarcity_config;
            run_config.seed = derive_seed(seeds[si], "scarcity." + row.label, si);
            FineTuneResult ft = fine_tune(checkpoint,
                                          FreezePlan::for_strategy(Strategy::FullFinetune), pool,
                                          run_config);
            row.seed_maes.push_back(eval_median_mae(ft.params, test_windows));
        }
        std::vector<double> sorted = row.seed_maes;
        std::sort(sorted.begin(), sorted.end());
        row.median_mae = sorted[sorted.size() / 2];
        row.tri = compute_tri(mae_source_val, row.median_mae);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace tftl
