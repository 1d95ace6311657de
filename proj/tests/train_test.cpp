#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "laf/checkpoint.hpp"
#include "laf/eval.hpp"
#include "laf/synthgen.hpp"
#include "laf/train.hpp"

using namespace laf;

namespace {

// Small frame and model so a training run takes seconds, built through the
// same generate -> crop -> align path as the full-size pipeline.
CanonicalFrame small_frame() {
    CanonicalFrame f;
    f.out_size = 64;
    f.eye_x = 24.0;
    f.eye_y = 28.0;
    f.eye_distance = 20.0;
    return f;
}

ModelConfig small_model_config() {
    ModelConfig mc;
    mc.backbone.in_channels = 3;
    mc.backbone.input_size = 64;
    mc.backbone.layers = {ConvLayerSpec{8, 2}, ConvLayerSpec{8, 1}, ConvLayerSpec{16, 2}, ConvLayerSpec{16, 1}};
    mc.mlp_hidden1 = 32;
    mc.mlp_hidden2 = 16;
    mc.primitive_dim = 6;
    return mc;
}

AlignedDataset small_dataset(Family family, Split split, int n_pairs, uint64_t seed) {
    DatasetSpec spec;
    spec.family = ManipulationFamily::defaults(family);
    spec.n_pairs = n_pairs;
    spec.seed = seed;
    spec.split = split;
    spec.image_size = 160;
    return preprocess_dataset(build_dataset(spec), small_frame());
}

bool models_bitwise_equal(AggregationModel& a, AggregationModel& b) {
    auto ta = model_param_table(a);
    auto tb = model_param_table(b);
    if (ta.size() != tb.size()) return false;
    for (size_t i = 0; i < ta.size(); ++i) {
        if (ta[i].name != tb[i].name) return false;
        if (*ta[i].data != *tb[i].data) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("training is deterministic and learns a local blend quickly") {
    AlignedDataset train_set = small_dataset(Family::LocalBlend, Split::Train, 20, 100);
    AlignedDataset val_set = small_dataset(Family::LocalBlend, Split::Val, 8, 100);

    TrainConfig tc;
    tc.epochs = 14;
    tc.batch_size = 8;
    tc.learning_rate = 2e-3;
    tc.seed = 5;
    tc.early_stop_patience = 0;

    AggregationModel init = init_model(small_model_config(), 42);
    TrainResult r1 = train_model(init, train_set, val_set, tc);
    TrainResult r2 = train_model(init, train_set, val_set, tc);

    CHECK(r1.history.size() == 14);
    for (size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].epoch == static_cast<int>(i) + 1);
        CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
        CHECK(r1.history[i].val_ap == r2.history[i].val_ap);
    }
    CHECK(models_bitwise_equal(r1.checkpoint.model, r2.checkpoint.model));
    CHECK(r1.checkpoint.meta.best_val_ap == r2.checkpoint.meta.best_val_ap);
    CHECK(r1.checkpoint.meta.best_epoch == r2.checkpoint.meta.best_epoch);

    // The blend seam is a designed-learnable artifact: training must beat the
    // all-tied starting point by a wide margin within a few epochs.
    CHECK(r1.checkpoint.meta.best_val_ap >= 0.9);
    CHECK(r1.checkpoint.meta.best_epoch >= 1);

    SUBCASE("a different train seed changes the outcome") {
        TrainConfig other = tc;
        other.seed = 6;
        TrainResult r3 = train_model(init, train_set, val_set, other);
        bool any_diff = false;
        for (size_t i = 0; i < r3.history.size(); ++i)
            any_diff = any_diff || r3.history[i].train_loss != r1.history[i].train_loss;
        CHECK(any_diff);
    }

    SUBCASE("checkpoints round-trip bitwise and preserve logits") {
        std::string path = "/tmp/laf_train_test.ckpt";
        save_checkpoint(r1.checkpoint, path);
        Checkpoint loaded = load_checkpoint(path);
        CHECK(loaded.format_version == 1);
        CHECK(models_bitwise_equal(loaded.model, r1.checkpoint.model));
        CHECK(loaded.meta.best_val_ap == r1.checkpoint.meta.best_val_ap);
        CHECK(loaded.meta.best_epoch == r1.checkpoint.meta.best_epoch);
        CHECK(loaded.meta.epochs_run == r1.checkpoint.meta.epochs_run);
        CHECK(loaded.meta.config.epochs == tc.epochs);
        CHECK(loaded.meta.config.seed == tc.seed);
        CHECK(loaded.meta.config.optimizer == Optimizer::Adam);

        auto before = score_dataset(r1.checkpoint.model, val_set, 8);
        auto after = score_dataset(loaded.model, val_set, 8);
        CHECK(before == after);
        std::filesystem::remove(path);
    }
}

TEST_CASE("zero epochs returns the untouched start at chance AP") {
    AlignedDataset train_set = small_dataset(Family::GridArtifact, Split::Train, 4, 7);
    AlignedDataset val_set = small_dataset(Family::GridArtifact, Split::Val, 5, 7);

    TrainConfig tc;
    tc.epochs = 0;
    tc.batch_size = 4;

    AggregationModel init = init_model(small_model_config(), 3);
    AggregationModel snapped = init;
    snap_model_f32(snapped);
    TrainResult r = train_model(init, train_set, val_set, tc);

    CHECK(r.history.empty());
    CHECK(r.checkpoint.meta.best_epoch == 0);
    CHECK(r.checkpoint.meta.epochs_run == 0);
    CHECK(models_bitwise_equal(r.checkpoint.model, snapped));
    for (double w : r.checkpoint.model.head.weight) CHECK(w == 0.0);

    // Zero head means every score ties at 0.5; with negatives ranked first,
    // a balanced set of n pairs gives AP = (1/n) sum_k k/(n+k).
    int n = 5;
    double expect = 0;
    for (int k = 1; k <= n; ++k) expect += static_cast<double>(k) / (n + k);
    expect /= n;
    CHECK(r.checkpoint.meta.best_val_ap == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("early stopping halts after patience non-improving epochs") {
    AlignedDataset train_set = small_dataset(Family::EyeTexture, Split::Train, 6, 11);
    AlignedDataset val_set = small_dataset(Family::EyeTexture, Split::Val, 4, 11);

    TrainConfig tc;
    tc.epochs = 12;
    tc.batch_size = 6;
    tc.seed = 2;
    tc.early_stop_patience = 2;

    TrainResult r = train_model(init_model(small_model_config(), 8), train_set, val_set, tc);
    int run = r.checkpoint.meta.epochs_run;
    CHECK(static_cast<int>(r.history.size()) == run);
    CHECK(run <= tc.epochs);
    double best = r.checkpoint.meta.best_val_ap;
    int best_epoch = r.checkpoint.meta.best_epoch;
    // Ties go to the later epoch, so the snapshot epoch attains the best AP
    // and nothing after it matches it.
    if (best_epoch >= 1) CHECK(r.history[best_epoch - 1].val_ap == best);
    for (int i = best_epoch; i < run; ++i) CHECK(r.history[i].val_ap < best);
    if (run < tc.epochs) {
        // Stopped early: the last `patience` epochs brought no strict gain.
        for (int i = run - tc.early_stop_patience; i < run; ++i) CHECK(r.history[i].val_ap <= best);
    }
}

TEST_CASE("sgd with momentum is available and moves the parameters") {
    AlignedDataset train_set = small_dataset(Family::ColorShift, Split::Train, 4, 21);
    AlignedDataset val_set = small_dataset(Family::ColorShift, Split::Val, 3, 21);

    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 4;
    tc.optimizer = Optimizer::SgdMomentum;
    tc.learning_rate = 0.05;
    tc.early_stop_patience = 0;

    AggregationModel start = init_model(small_model_config(), 4);
    TrainResult r = train_model(start, train_set, val_set, tc);
    CHECK(r.history.size() == 1);
    double moved = 0;
    for (double w : r.checkpoint.model.head.weight) moved += std::abs(w);
    // Best snapshot may be the epoch-1 model or the start; the history entry
    // must reflect a real update either way.
    AggregationModel snapped = start;
    snap_model_f32(snapped);
    if (r.checkpoint.meta.best_epoch == 1) CHECK(moved > 0);
    CHECK(r.history[0].train_loss > 0);
}

TEST_CASE("train rejects bad inputs") {
    AlignedDataset ds = small_dataset(Family::LocalBlend, Split::Train, 3, 1);
    AlignedDataset real_only = ds;
    real_only.items.erase(std::remove_if(real_only.items.begin(), real_only.items.end(),
                                         [](const AlignedSample& s) { return s.label == 1; }),
                          real_only.items.end());

    TrainConfig tc;
    tc.epochs = 1;
    AggregationModel m = init_model(small_model_config(), 1);
    CHECK_THROWS_AS(train_model(m, real_only, ds, tc), InvalidDataset);
    CHECK_THROWS_AS(train_model(m, ds, real_only, tc), InvalidDataset);

    TrainConfig bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train_model(m, ds, ds, bad), InvalidArgument);
    bad = tc;
    bad.learning_rate = 0;
    CHECK_THROWS_AS(train_model(m, ds, ds, bad), InvalidArgument);

    AlignedDataset wrong_size = ds;
    wrong_size.size = 32;
    for (auto& item : wrong_size.items) item.pixels.assign(32 * 32 * 3, 128);
    CHECK_THROWS_AS(train_model(m, wrong_size, ds, tc), InvalidDataset);
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    TrainConfig tc;
    Checkpoint ckpt;
    ckpt.model = init_model(small_model_config(), 12);
    ckpt.meta.config = tc;
    ckpt.meta.note = "corruption probe";
    std::string path = "/tmp/laf_ckpt_corrupt.ckpt";
    save_checkpoint(ckpt, path);
    std::string good = read_file(path);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/m.ckpt"), FormatError);

    std::string bad = good;
    bad[0] = 'X';
    atomic_write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    bad = good;
    bad[8] = 9;  // version field
    atomic_write_file(path, bad);
    CHECK_THROWS_AS(load_checkpoint(path), UnsupportedVersion);

    atomic_write_file(path, good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    atomic_write_file(path, good + "tail");
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    // Untouched file still loads and carries the note through.
    atomic_write_file(path, good);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.meta.note == "corruption probe");
    std::filesystem::remove(path);
}

TEST_CASE("config json round trips") {
    ModelConfig mc = small_model_config();
    ModelConfig mc2 = model_config_from_json(model_config_to_json(mc));
    CHECK(mc2.backbone.input_size == mc.backbone.input_size);
    CHECK(mc2.backbone.layers.size() == mc.backbone.layers.size());
    CHECK(mc2.backbone.layers[2].out_channels == 16);
    CHECK(mc2.backbone.layers[0].stride == 2);
    CHECK(mc2.mlp_hidden1 == mc.mlp_hidden1);
    CHECK(mc2.primitive_dim == mc.primitive_dim);

    TrainConfig tc;
    tc.epochs = 7;
    tc.learning_rate = 0.0025;
    tc.seed = 99;
    tc.optimizer = Optimizer::SgdMomentum;
    TrainConfig tc2 = train_config_from_json(train_config_to_json(tc));
    CHECK(tc2.epochs == 7);
    CHECK(tc2.learning_rate == 0.0025);
    CHECK(tc2.seed == 99);
    CHECK(tc2.optimizer == Optimizer::SgdMomentum);
    CHECK(optimizer_name(Optimizer::Adam) == "adam");
    CHECK_THROWS_AS(parse_optimizer("rmsprop"), InvalidArgument);
}
