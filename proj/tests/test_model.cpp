#include <algorithm>
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "gradcheck.hpp"
#include "tftl/model.hpp"
#include "tftl/optimizer.hpp"
#include "tftl/synthetic.hpp"

using namespace tftl;

namespace {

TFTConfig small_config(int d = 8, int lookback = 12, int horizon = 4, int n_unknown = 3,
                       int n_known = 7) {
    TFTConfig cfg;
    cfg.hidden_size = d;
    cfg.attention_heads = 2;
    cfg.dropout_rate = 0.1;
    cfg.lookback = lookback;
    cfg.horizon = horizon;
    cfg.quantiles = {0.1, 0.5, 0.9};
    cfg.n_unknown = n_unknown;
    cfg.n_known = n_known;
    cfg.n_static = 1;
    return cfg;
}

WindowBatch random_window(const TFTConfig& cfg, RngStream& rng) {
    WindowBatch w;
    w.lookback = cfg.lookback;
    w.horizon = cfg.horizon;
    w.n_unknown = cfg.n_unknown;
    w.n_known = cfg.n_known;
    w.start_epoch_sec = 1651363200;
    w.encoder_unknown.resize(static_cast<std::size_t>(cfg.lookback) * cfg.n_unknown);
    w.encoder_known.resize(static_cast<std::size_t>(cfg.lookback) * cfg.n_known);
    w.decoder_known.resize(static_cast<std::size_t>(cfg.horizon) * cfg.n_known);
    w.static_covariates.assign(static_cast<std::size_t>(cfg.n_static), 0.0);
    w.target.resize(static_cast<std::size_t>(cfg.horizon));
    w.loss_mask.assign(static_cast<std::size_t>(cfg.horizon), 1);
    for (double& v : w.encoder_unknown) {
        v = rng.uniform(0.0, 1.0);
    }
    for (double& v : w.encoder_known) {
        v = rng.uniform(-1.0, 1.0);
    }
    for (double& v : w.decoder_known) {
        v = rng.uniform(-1.0, 1.0);
    }
    for (double& v : w.target) {
        v = rng.uniform(0.0, 1.0);
    }
    return w;
}

std::vector<Tensor> grn_tensors(const GrnParams& g) {
    std::vector<Tensor> out = {g.w_in, g.b_in, g.w_out, g.b_out, g.w_gate,
                               g.b_gate, g.w_val, g.b_val, g.ln_gain, g.ln_bias};
    if (g.has_skip) {
        out.push_back(g.w_skip);
        out.push_back(g.b_skip);
    }
    return out;
}

// Swaps unknown channels i and j everywhere a parameter is tied to a channel:
// embedding rows, the variable-selection GRN's input blocks, and its
// per-channel logit parameters.
void permute_unknown_channels(TFTLiteParams* p, int i, int j) {
    const int d = p->config.hidden_size;
    auto swap_rows = [&](Tensor t, int row_a, int row_b, int width) {
        for (int c = 0; c < width; ++c) {
            std::swap(t.values_mut()[static_cast<std::size_t>(row_a) * width + c],
                      t.values_mut()[static_cast<std::size_t>(row_b) * width + c]);
        }
    };
    auto swap_block_rows = [&](Tensor t, int block_a, int block_b, int width) {
        for (int r = 0; r < d; ++r) {
            swap_rows(t, block_a * d + r, block_b * d + r, width);
        }
    };
    auto swap_cols = [&](Tensor t, int col_a, int col_b) {
        const int width = t.dim(1);
        for (int r = 0; r < t.dim(0); ++r) {
            std::swap(t.values_mut()[static_cast<std::size_t>(r) * width + col_a],
                      t.values_mut()[static_cast<std::size_t>(r) * width + col_b]);
        }
    };
    auto swap_elems = [&](Tensor t, int a, int b) {
        std::swap(t.values_mut()[static_cast<std::size_t>(a)],
                  t.values_mut()[static_cast<std::size_t>(b)]);
    };

    swap_rows(p->unknown_w, i, j, d);
    swap_rows(p->unknown_b, i, j, d);
    GrnParams& vs = p->varsel_encoder;
    swap_block_rows(vs.w_in, i, j, vs.w_in.dim(1));
    swap_block_rows(vs.w_skip, i, j, vs.w_skip.dim(1));
    // Logit axis: unknown channels come first in the concatenated embedding.
    swap_cols(vs.w_out, i, j);
    swap_elems(vs.b_out, i, j);
    swap_cols(vs.w_gate, i, j);
    swap_rows(vs.w_gate, i, j, vs.w_gate.dim(1));
    swap_elems(vs.b_gate, i, j);
    swap_cols(vs.w_val, i, j);
    swap_rows(vs.w_val, i, j, vs.w_val.dim(1));
    swap_elems(vs.b_val, i, j);
    swap_cols(vs.w_skip, i, j);
    swap_elems(vs.b_skip, i, j);
    swap_elems(vs.ln_gain, i, j);
    swap_elems(vs.ln_bias, i, j);
}

}  // namespace

TEST_CASE("config validation") {
    TFTConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.hidden_size = 9;  // not divisible by 2 heads
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.quantiles = {0.5, 0.5};
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.quantiles = {0.1, 1.5};
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("probe head parameter count") {
    SUBCASE("default configuration gives 455") {
        TFTConfig cfg;
        cfg.n_unknown = 5;
        cfg.n_known = 8;
        TFTLiteParams params = TFTLiteParams::init(cfg, 1);
        CHECK(count_trainable(params, FreezePlan::for_strategy(Strategy::ProbeOnly)) == 455);
    }
    SUBCASE("d=1 with one quantile gives 2") {
        TFTConfig cfg = small_config(1, 4, 2);
        cfg.attention_heads = 1;
        cfg.quantiles = {0.5};
        TFTLiteParams params = TFTLiteParams::init(cfg, 1);
        CHECK(count_trainable(params, FreezePlan::for_strategy(Strategy::ProbeOnly)) == 2);
    }
    SUBCASE("FullFinetune counts every parameter and groups partition the set") {
        TFTLiteParams params = TFTLiteParams::init(small_config(), 1);
        CHECK(count_trainable(params, FreezePlan::for_strategy(Strategy::FullFinetune)) ==
              params.total_count());
        std::int64_t by_groups = 0;
        for (const std::string& g : TFTLiteParams::group_names()) {
            by_groups += params.group_count(g);
        }
        CHECK(by_groups == params.total_count());
        CHECK(static_cast<std::int64_t>(params.all_parameters().size()) > 0);
    }
    SUBCASE("unknown group names are rejected") {
        TFTLiteParams params = TFTLiteParams::init(small_config(), 1);
        FreezePlan plan;
        plan.trainable_groups = {"outputs"};
        CHECK_THROWS_AS(count_trainable(params, plan), Error);
    }
    SUBCASE("random configurations match d*Q+Q") {
        RngStream rng(31, "head-count");
        for (int rep = 0; rep < 10; ++rep) {
            const int heads = 1 + static_cast<int>(rng.uniform_index(4));
            const int d = heads * (1 + static_cast<int>(rng.uniform_index(24)));
            const int nq = 1 + static_cast<int>(rng.uniform_index(9));
            TFTConfig cfg = small_config(d, 6, 3);
            cfg.attention_heads = heads;
            cfg.quantiles.clear();
            for (int i = 0; i < nq; ++i) {
                cfg.quantiles.push_back((i + 1.0) / (nq + 1.0));
            }
            TFTLiteParams params = TFTLiteParams::init(cfg, rep);
            CHECK(count_trainable(params, FreezePlan::for_strategy(Strategy::ProbeOnly)) ==
                  static_cast<std::int64_t>(d) * nq + nq);
        }
    }
}

TEST_CASE("forward with zero parameters emits the head bias at every step") {
    TFTConfig cfg = small_config();
    TFTLiteParams params = TFTLiteParams::init(cfg, 3);
    for (Tensor& t : params.all_parameters()) {
        std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
    }
    params.head_b.values_mut() = {0.2, 0.5, 0.9};
    RngStream data_rng(5, "window");
    WindowBatch w = random_window(cfg, data_rng);
    RngStream drop(0, "drop");
    QuantileForecast f = tft_forward(params, w, ForwardMode::Eval, drop);
    for (int h = 0; h < cfg.horizon; ++h) {
        CHECK(f.value(h, 0) == doctest::Approx(0.2));
        CHECK(f.value(h, 1) == doctest::Approx(0.5));
        CHECK(f.value(h, 2) == doctest::Approx(0.9));
    }
}

TEST_CASE("forward is deterministic for a fixed seed") {
    TFTConfig cfg = small_config();
    TFTLiteParams params = TFTLiteParams::init(cfg, 21);
    RngStream data_rng(9, "window");
    WindowBatch w = random_window(cfg, data_rng);
    RngStream d1(77, "drop");
    RngStream d2(77, "drop");
    QuantileForecast a = tft_forward(params, w, ForwardMode::Train, d1);
    QuantileForecast b = tft_forward(params, w, ForwardMode::Train, d2);
    CHECK(a.values == b.values);
    RngStream d3(78, "drop");
    QuantileForecast c = tft_forward(params, w, ForwardMode::Train, d3);
    CHECK(a.values != c.values);
}

TEST_CASE("channel-count mismatch raises an alignment error") {
    TFTConfig cfg = small_config();
    TFTLiteParams params = TFTLiteParams::init(cfg, 3);
    RngStream data_rng(5, "window");
    TFTConfig wrong = cfg;
    wrong.n_unknown = cfg.n_unknown + 2;
    WindowBatch w = random_window(wrong, data_rng);
    RngStream drop(0, "drop");
    try {
        tft_forward(params, w, ForwardMode::Eval, drop);
        FAIL("expected alignment error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Alignment);
        CHECK(std::string(e.what()).find("align_channels") != std::string::npos);
    }
}

TEST_CASE("permuting unknown channels with their per-channel parameters is a no-op") {
    TFTConfig cfg = small_config(8, 12, 4, 4, 7);
    RngStream data_rng(13, "window");
    WindowBatch w = random_window(cfg, data_rng);
    TFTLiteParams params = TFTLiteParams::init(cfg, 55);
    RngStream drop(0, "drop");
    QuantileForecast base = tft_forward(params, w, ForwardMode::Eval, drop);

    const int i = 1;
    const int j = 3;
    TFTLiteParams permuted = params.clone();
    permute_unknown_channels(&permuted, i, j);
    WindowBatch swapped = w;
    for (int t = 0; t < cfg.lookback; ++t) {
        std::swap(swapped.encoder_unknown[static_cast<std::size_t>(t) * cfg.n_unknown + i],
                  swapped.encoder_unknown[static_cast<std::size_t>(t) * cfg.n_unknown + j]);
    }
    QuantileForecast perm = tft_forward(permuted, swapped, ForwardMode::Eval, drop);
    for (std::size_t idx = 0; idx < base.values.size(); ++idx) {
        CHECK(perm.values[idx] == doctest::Approx(base.values[idx]).epsilon(1e-9));
    }
}

TEST_CASE("quantile loss") {
    QuantileForecast f;
    f.horizon = 2;
    f.quantiles = {0.5};
    f.values = {1.0, 2.0};

    SUBCASE("exact prediction has zero loss") {
        CHECK(quantile_loss(f, {1.0, 2.0}, f.quantiles) == 0.0);
    }
    SUBCASE("median pinball at unit error is one half") {
        QuantileForecast g;
        g.horizon = 1;
        g.quantiles = {0.5};
        g.values = {0.0};
        CHECK(quantile_loss(g, {1.0}, g.quantiles) == doctest::Approx(0.5));
    }
    SUBCASE("pinball asymmetry at q=0.9") {
        QuantileForecast g;
        g.horizon = 1;
        g.quantiles = {0.9};
        g.values = {1.0};
        CHECK(quantile_loss(g, {2.0}, g.quantiles) == doctest::Approx(0.9));
        g.values = {2.0};
        CHECK(quantile_loss(g, {1.0}, g.quantiles) == doctest::Approx(0.1));
    }
    SUBCASE("masked steps are excluded") {
        CHECK(quantile_loss(f, {0.0, 2.0}, f.quantiles, {0, 1}) == 0.0);
    }
}

TEST_CASE("monotonic repair sorts rows and keeps the median's rank position") {
    TFTConfig cfg = small_config();
    cfg.quantiles = {0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98};
    TFTLiteParams params = TFTLiteParams::init(cfg, 77);
    RngStream data_rng(15, "window");
    WindowBatch w = random_window(cfg, data_rng);
    RngStream drop(0, "drop");
    QuantileForecast f = tft_forward(params, w, ForwardMode::Eval, drop);
    const int q = static_cast<int>(cfg.quantiles.size());
    for (int h = 0; h < cfg.horizon; ++h) {
        std::vector<double> row(q);
        for (int qi = 0; qi < q; ++qi) {
            row[static_cast<std::size_t>(qi)] = f.value(h, qi);
            if (qi > 0) {
                CHECK(f.value(h, qi) >= f.value(h, qi - 1));
            }
        }
        // The median column holds the middle order statistic of the row.
        std::vector<double> sorted = row;
        std::sort(sorted.begin(), sorted.end());
        CHECK(f.value(h, cfg.median_index()) == sorted[static_cast<std::size_t>(q / 2)]);
    }
}

TEST_CASE("causal mask: zeroing future decoder inputs leaves earlier predictions unchanged") {
    TFTConfig cfg = small_config();
    cfg.dropout_rate = 0.0;
    TFTLiteParams params = TFTLiteParams::init(cfg, 99);
    RngStream data_rng(25, "window");
    WindowBatch w = random_window(cfg, data_rng);
    RngStream drop(0, "drop");
    QuantileForecast base = tft_forward(params, w, ForwardMode::Eval, drop);
    for (int cut = 1; cut < cfg.horizon; ++cut) {
        WindowBatch mutated = w;
        for (int h = cut; h < cfg.horizon; ++h) {
            for (int kk = 0; kk < cfg.n_known; ++kk) {
                mutated.decoder_known[static_cast<std::size_t>(h) * cfg.n_known + kk] = 0.0;
            }
        }
        QuantileForecast out = tft_forward(params, mutated, ForwardMode::Eval, drop);
        for (int h = 0; h < cut; ++h) {
            for (int qi = 0; qi < cfg.n_quantiles(); ++qi) {
                REQUIRE(out.value(h, qi) == base.value(h, qi));
            }
        }
    }
}

TEST_CASE("layer gradients match finite differences") {
    RngStream rng(1234, "layer-gradcheck");
    auto run_check = [&](const char* name, auto build, std::vector<Tensor> params) {
        for (Tensor& p : params) {
            p.grad_mut().clear();
        }
        Tape tape;
        {
            TapeScope scope(tape);
            Tensor loss = build();
            tape.backward(loss);
        }
        auto report = tftl::test::check_gradients([&]() { return build().item(); }, params);
        const std::string msg = std::string(name) + ": worst rel err " +
                                std::to_string(report.worst_rel_err) + " at " +
                                report.worst_location;
        CAPTURE(msg);
        CHECK(report.failed == 0);
    };

    for (int rep = 0; rep < 3; ++rep) {
        const std::uint64_t seed = 9000 + static_cast<std::uint64_t>(rep);

        // GRN (with projection skip).
        GrnParams grn = [&] {
            TFTLiteParams p = TFTLiteParams::init(small_config(6, 4, 2, 2, 7), seed);
            return p.varsel_decoder;
        }();
        Tensor gx = Tensor::random_uniform({3, 42}, -1.0, 1.0, rng, true);
        RngStream grn_drop(seed, "grn-drop");
        auto grn_params = grn_tensors(grn);
        grn_params.push_back(gx);
        run_check("grn",
                  [&]() {
                      RngStream r(seed, "grn-mask");
                      return sum(mul(grn_forward(grn, gx, 0.2, r, true),
                                     grn_forward(grn, gx, 0.0, r, false)));
                  },
                  grn_params);

        // LSTM cell.
        const int d = 6;
        LstmParams lstm = [&] {
            TFTLiteParams p = TFTLiteParams::init(small_config(6, 4, 2, 2, 7), seed);
            return p.encoder_lstm;
        }();
        Tensor lx = Tensor::random_uniform({3, d}, -1.0, 1.0, rng, true);
        Tensor lh = Tensor::random_uniform({3, d}, -1.0, 1.0, rng, true);
        Tensor lc = Tensor::random_uniform({3, d}, -1.0, 1.0, rng, true);
        run_check("lstm_cell",
                  [&]() {
                      LstmState next = lstm_cell(lstm, lx, {lh, lc}, d);
                      return sum(mul(next.h, next.c));
                  },
                  {lstm.w_ih, lstm.w_hh, lstm.bias, lx, lh, lc});

        // Attention heads with a causal mask.
        AttentionParams attn = [&] {
            TFTLiteParams p = TFTLiteParams::init(small_config(6, 4, 2, 2, 7), seed);
            return p.attention;
        }();
        Tensor queries = Tensor::random_uniform({2, 3, 6}, -1.0, 1.0, rng, true);
        Tensor memory = Tensor::random_uniform({2, 5, 6}, -1.0, 1.0, rng, true);
        std::vector<std::uint8_t> valid(3 * 5, 0);
        for (int i = 0; i < 3; ++i) {
            for (int t = 0; t <= 2 + i; ++t) {
                valid[static_cast<std::size_t>(i) * 5 + t] = 1;
            }
        }
        RngStream attn_drop(seed, "attn-mask");
        run_check("attention",
                  [&]() {
                      RngStream r(seed, "attn-mask");
                      return sum(attention_forward(attn, queries, memory, 2, valid, 0.0, r, false));
                  },
                  {attn.w_q, attn.b_q, attn.w_k, attn.b_k, attn.w_v, attn.b_v, attn.w_out,
                   attn.b_out, queries, memory});

        // Variable selection (embedding + GRN + softmax mixdown).
        TFTLiteParams vsp = TFTLiteParams::init(small_config(4, 4, 2, 3, 7), seed + 50);
        Tensor vx = Tensor::random_uniform({3, 3}, -1.0, 1.0, rng, true);
        auto vs_params = grn_tensors(vsp.varsel_decoder);
        // Reuse the decoder-side varsel (K=7 inputs) with a known-embed slice.
        Tensor kx = Tensor::random_uniform({3, 7}, -1.0, 1.0, rng, true);
        vs_params.push_back(vsp.known_w);
        vs_params.push_back(vsp.known_b);
        vs_params.push_back(kx);
        run_check("variable_selection",
                  [&]() {
                      Tensor flat = channel_embed(kx, vsp.known_w, vsp.known_b);
                      RngStream r(seed, "vs-mask");
                      return sum(mul(varsel_forward(vsp.varsel_decoder, flat, 4, 0.0, r, false),
                                     varsel_forward(vsp.varsel_decoder, flat, 4, 0.0, r, false)));
                  },
                  vs_params);

        // Output head.
        Tensor hx = Tensor::random_uniform({2, 3, 4}, -1.0, 1.0, rng, true);
        Tensor hw = Tensor::random_uniform({4, 3}, -1.0, 1.0, rng, true);
        Tensor hb = Tensor::random_uniform({3}, -0.5, 0.5, rng, true);
        run_check("output_head", [&]() { return sum(tanh(linear(hx, hw, hb))); }, {hx, hw, hb});

        // Quantile loss through the head.
        std::vector<double> target = {0.4, -0.1, 0.7, 0.2, 0.9, -0.3};
        std::vector<std::uint8_t> lmask = {1, 1, 1, 0, 1, 1};
        std::vector<double> qs = {0.1, 0.5, 0.9};
        run_check("quantile_loss",
                  [&]() { return pinball_loss(linear(hx, hw, hb), target, lmask, qs); },
                  {hx, hw, hb});
    }
}

TEST_CASE("end-to-end model gradient check on a tiny config") {
    TFTConfig cfg = small_config(4, 5, 2, 2, 7);
    cfg.dropout_rate = 0.0;
    TFTLiteParams params = TFTLiteParams::init(cfg, 31);
    RngStream data_rng(77, "window");
    WindowBatch w = random_window(cfg, data_rng);
    std::vector<const WindowBatch*> batch = {&w};
    std::vector<std::uint8_t> lmask(w.loss_mask.begin(), w.loss_mask.end());

    auto loss_fn = [&]() {
        RngStream drop(0, "drop");
        Tensor out = tft_forward_batch(params, batch, ForwardMode::Eval, drop);
        return pinball_loss(out, w.target, lmask, cfg.quantiles);
    };
    std::vector<Tensor> all = params.all_parameters();
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = loss_fn();
        tape.backward(loss);
    }
    auto report = tftl::test::check_gradients([&]() { return loss_fn().item(); }, all);
    const std::string msg = "worst rel err " + std::to_string(report.worst_rel_err) + " at " +
                            report.worst_location + " of " + std::to_string(report.checked);
    CAPTURE(msg);
    CHECK(report.failed == 0);
}

TEST_CASE("lstm baseline") {
    SUBCASE("zero parameters produce zero output") {
        LstmBaselineParams p = LstmBaselineParams::init(6, 8, 3, 2, 7, 4);
        for (Tensor& t : p.all_parameters()) {
            std::fill(t.values_mut().begin(), t.values_mut().end(), 0.0);
        }
        TFTConfig cfg = small_config(6, 8, 3, 2, 7);
        RngStream data_rng(3, "window");
        WindowBatch w = random_window(cfg, data_rng);
        for (double v : lstm_baseline_forward(p, w)) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("deterministic under a fixed seed") {
        LstmBaselineParams a = LstmBaselineParams::init(6, 8, 3, 2, 7, 42);
        LstmBaselineParams b = LstmBaselineParams::init(6, 8, 3, 2, 7, 42);
        TFTConfig cfg = small_config(6, 8, 3, 2, 7);
        RngStream data_rng(3, "window");
        WindowBatch w = random_window(cfg, data_rng);
        CHECK(lstm_baseline_forward(a, w) == lstm_baseline_forward(b, w));
    }
}

TEST_CASE("checkpoint round trip is value-exact and byte-stable") {
    TFTConfig cfg = small_config();
    Checkpoint ckpt;
    ckpt.params = TFTLiteParams::init(cfg, 2024);
    ckpt.canonical_channels = {{"elec_a", ChannelKind::TargetComponent, false},
                               {"temp", ChannelKind::KnownCovariate, false}};
    save_checkpoint(ckpt, "ckpt_a.bin");
    Checkpoint loaded = load_checkpoint("ckpt_a.bin");
    CHECK(loaded.params.config.hidden_size == cfg.hidden_size);
    CHECK(loaded.params.config.quantiles == cfg.quantiles);
    REQUIRE(loaded.canonical_channels.size() == 2);
    CHECK(loaded.canonical_channels[0].name == "elec_a");
    CHECK(loaded.params.head_w.values() == ckpt.params.head_w.values());
    CHECK(loaded.params.varsel_encoder.w_in.values() == ckpt.params.varsel_encoder.w_in.values());

    save_checkpoint(loaded, "ckpt_b.bin");
    // Byte-stable: save(load(x)) == x.
    auto slurp = [](const char* path) {
        std::FILE* f = std::fopen(path, "rb");
        REQUIRE(f != nullptr);
        std::string data;
        char buf[4096];
        std::size_t n = 0;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) {
            data.append(buf, n);
        }
        std::fclose(f);
        return data;
    };
    CHECK(slurp("ckpt_a.bin") == slurp("ckpt_b.bin"));
}
