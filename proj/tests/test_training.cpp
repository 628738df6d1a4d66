#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "test_support.hpp"
#include "xrx/training.hpp"

using namespace xrx;

namespace {

Network small_net() {
    Network net(Shape3{1, 16, 16},
                {LayerSpec::conv2d(6, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                 LayerSpec::global_avg_pool(), LayerSpec::dense(3), LayerSpec::softmax()});
    return net;
}

// texture-discriminable 3-class task; a GAP head cannot separate classes by
// position alone, so the patterns differ in orientation
LabeledData tiny_task(std::size_t per_class, std::uint64_t seed) {
    const testsup::QuadrantDataset qd = testsup::quadrant_dataset(per_class, seed, 16);
    return LabeledData{qd.inputs, qd.labels};
}

}  // namespace

TEST_CASE("cosine annealing starts every cycle at the maximum rate") {
    ScheduleConfig cfg{1.0, 200, 20};
    CHECK(cosine_annealing_lr(1, cfg) == 1.0);
    for (int cycle = 0; cycle < 20; ++cycle)
        CHECK(cosine_annealing_lr(cycle * 10 + 1, cfg) == 1.0);
    ScheduleConfig other{0.25, 40, 4};
    CHECK(cosine_annealing_lr(1, other) == 0.25);
    CHECK(cosine_annealing_lr(11, other) == 0.25);
}

TEST_CASE("cosine annealing quarter and near-bottom values") {
    ScheduleConfig cfg{1.0, 200, 20};
    CHECK(cosine_annealing_lr(6, cfg) == Catch::Approx(0.5).margin(1e-12));
    const double want = (std::cos(0.9 * 3.14159265358979323846) + 1.0) / 2.0;
    CHECK(cosine_annealing_lr(10, cfg) == Catch::Approx(want).margin(1e-12));
    CHECK(want == Catch::Approx(0.024472).margin(5e-7));
}

TEST_CASE("cosine annealing validates the epoch range") {
    ScheduleConfig cfg{1.0, 200, 20};
    CHECK_THROWS_AS(cosine_annealing_lr(0, cfg), OutOfRange);
    CHECK_THROWS_AS(cosine_annealing_lr(201, cfg), OutOfRange);
}

TEST_CASE("cosine annealing is periodic and bounded") {
    ScheduleConfig cfg{0.7, 60, 6};
    const int P = cfg.period();
    CHECK(P == 10);
    for (int t = 1; t <= 50; ++t) {
        const double a = cosine_annealing_lr(t, cfg);
        CHECK(a > 0.0);
        CHECK(a <= cfg.alpha0);
        CHECK(cosine_annealing_lr(t + P, cfg) == Catch::Approx(a).margin(1e-15));
    }
}

TEST_CASE("class weights balance to ones and handle heavy imbalance") {
    const auto ones = class_weights({100, 100, 100});
    for (float w : ones) CHECK(w == 1.0f);

    const auto w = class_weights({8066, 5538, 358});
    CHECK(w[2] == Catch::Approx(13.0).margin(1e-6));  // 13962 / (3 * 358)

    const auto doubled = class_weights({16132, 11076, 716});
    for (std::size_t i = 0; i < 3; ++i) CHECK(doubled[i] == Catch::Approx(w[i]).margin(1e-7));

    CHECK_THROWS_AS(class_weights({5, 0, 3}), EmptyClass);
}

TEST_CASE("sgd step update rule") {
    std::vector<float> p = {1.0f};
    sgd_step(p, {1.0f}, 0.0, 0.0);
    CHECK(p[0] == 1.0f);

    p = {1.0f};
    sgd_step(p, {1.0f}, 0.1, 0.0);
    CHECK(p[0] == Catch::Approx(0.9f));

    p = {1.0f};
    sgd_step(p, {0.0f}, 1.0, 0.1);
    CHECK(p[0] == Catch::Approx(0.9f));

    std::vector<float> bad = {1.0f, 2.0f};
    CHECK_THROWS_AS(sgd_step(bad, {1.0f}, 0.1, 0.0), ShapeMismatch);
}

TEST_CASE("one sgd step descends a quadratic objective") {
    // L(p) = 0.5 * p^2, gradient p
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        std::vector<float> p = {static_cast<float>(rng.uniform(-3.0, 3.0))};
        if (p[0] == 0.0f) continue;
        const double before = 0.5 * p[0] * p[0];
        sgd_step(p, {p[0]}, 0.1, 0.0);
        CHECK(0.5 * p[0] * p[0] < before);
    }
}

TEST_CASE("training returns one snapshot per cycle with the schedule respected") {
    Network net = small_net();
    net.init_params(21);
    LabeledData data = tiny_task(12, 33);
    TrainConfig cfg;
    cfg.schedule = {0.5, 12, 3};
    cfg.batch_size = 8;
    cfg.seed = 5;
    std::ostringstream log;
    std::vector<EpochLogRow> rows;
    const auto snaps = train_with_snapshots(net, data, cfg, &log, &rows);

    REQUIRE(snaps.size() == 3);
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        CHECK(snaps[i].cycle == static_cast<int>(i) + 1);
        CHECK(snaps[i].epoch >= 1);
        CHECK(snaps[i].epoch <= 12);
    }

    REQUIRE(rows.size() == 12);
    const int P = cfg.schedule.period();
    for (const auto& r : rows) {
        if ((r.epoch - 1) % P == 0) CHECK(r.lr == 0.5);  // every cycle starts at alpha0
        CHECK(r.cycle == (r.epoch - 1) / P + 1);
    }

    // log format: header + one line per epoch, six comma-separated fields
    std::istringstream is(log.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "epoch,cycle,lr,train_loss,val_loss,val_acc");
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        CHECK(std::count(line.begin(), line.end(), ',') == 5);
    }
    CHECK(n == 12);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    LabeledData data = tiny_task(10, 44);
    TrainConfig cfg;
    cfg.schedule = {0.4, 8, 2};
    cfg.batch_size = 8;
    cfg.seed = 99;

    Network a = small_net();
    a.init_params(cfg.seed);
    const auto sa = train_with_snapshots(a, data, cfg);
    Network b = small_net();
    b.init_params(cfg.seed);
    const auto sb = train_with_snapshots(b, data, cfg);

    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].epoch == sb[i].epoch);
        CHECK(sa[i].val.loss == sb[i].val.loss);
        for (std::size_t l = 0; l < sa[i].params.size(); ++l) {
            CHECK(sa[i].params[l].weights == sb[i].params[l].weights);
            CHECK(sa[i].params[l].bias == sb[i].params[l].bias);
        }
    }
}

TEST_CASE("later snapshots do not regress on the tiny task") {
    Network net = small_net();
    net.init_params(3);
    LabeledData data = tiny_task(20, 55);
    TrainConfig cfg;
    cfg.schedule = {0.5, 16, 2};
    cfg.batch_size = 8;
    cfg.seed = 17;
    const auto snaps = train_with_snapshots(net, data, cfg);
    REQUIRE(snaps.size() == 2);
    CHECK(snaps.back().val.accuracy >= snaps.front().val.accuracy);
}

TEST_CASE("training rejects invalid inputs") {
    Network net = small_net();
    net.init_params(1);
    LabeledData empty;
    TrainConfig cfg;
    cfg.schedule = {0.5, 4, 2};
    CHECK_THROWS_AS(train_with_snapshots(net, empty, cfg), InvalidConfig);

    LabeledData data = tiny_task(4, 1);
    TrainConfig bad = cfg;
    bad.schedule.cycles = 0;
    CHECK_THROWS_AS(train_with_snapshots(net, data, bad), InvalidConfig);
}

TEST_CASE("diverging training reports NonFiniteLoss with the cycle") {
    Network net = small_net();
    net.init_params(2);
    LabeledData data = tiny_task(8, 9);
    TrainConfig cfg;
    cfg.schedule = {1e38, 8, 2};  // overflows the parameters to inf within an epoch
    cfg.batch_size = 4;
    cfg.seed = 3;
    try {
        train_with_snapshots(net, data, cfg);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(std::string(e.what()).find("cycle") != std::string::npos);
    }
}

TEST_CASE("config dropout rate overrides the network's dropout layers") {
    auto build = [] {
        Network net(Shape3{1, 16, 16},
                    {LayerSpec::conv2d(6, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
                     LayerSpec::dropout(0.9f), LayerSpec::global_avg_pool(), LayerSpec::dense(3),
                     LayerSpec::softmax()});
        net.init_params(13);
        return net;
    };
    LabeledData data = tiny_task(8, 88);
    TrainConfig cfg;
    cfg.schedule = {0.2, 4, 2};
    cfg.batch_size = 8;
    cfg.seed = 6;

    Network with_rate = build();
    train_with_snapshots(with_rate, data, cfg);  // keeps the declared 0.9 rate

    Network no_dropout = build();
    TrainConfig off = cfg;
    off.dropout_rate = 0.0f;
    train_with_snapshots(no_dropout, data, off);

    CHECK(with_rate.params(0).weights != no_dropout.params(0).weights);

    // the override itself is reproducible
    Network again = build();
    train_with_snapshots(again, data, off);
    CHECK(again.params(0).weights == no_dropout.params(0).weights);
}

TEST_CASE("snapshot capture can be switched to plain last-epoch") {
    Network net = small_net();
    net.init_params(8);
    LabeledData data = tiny_task(8, 77);
    TrainConfig cfg;
    cfg.schedule = {0.3, 8, 2};
    cfg.batch_size = 8;
    cfg.seed = 1;
    cfg.capture = SnapshotCapture::LastEpoch;
    const auto snaps = train_with_snapshots(net, data, cfg);
    REQUIRE(snaps.size() == 2);
    CHECK(snaps[0].epoch == 4);
    CHECK(snaps[1].epoch == 8);
}
