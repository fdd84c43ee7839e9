#include "helpers.hpp"

#include "mobiclr/synth.hpp"
#include "mobiclr/trainer.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

using namespace mobiclr;
using namespace mobiclr::trainer;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.model.hidden_channels = 8;
    c.model.repr_dim = 8;
    c.model.projection = {8, 8};
    c.epochs = 2;
    c.seed = 4;
    return c;
}

ingest::NormalizedSeries city(int regions, int hours, std::uint64_t seed) {
    return ingest::zscore(synth::gen_city(regions, 3, hours, 1.0, seed).series);
}

}  // namespace

TEST_CASE("training the default model on 16 regions lowers the epoch loss") {
    const auto data = city(16, 336, 1);
    TrainConfig c;
    c.epochs = 5;
    const auto state = train(data, c);
    const auto means = epoch_means(state.history);
    REQUIRE(means.size() == 5);
    MESSAGE("epoch means: " << means[0] << " " << means[1] << " " << means[2] << " " << means[3] << " " << means[4]);
    CHECK(means[4] < means[0]);
    for (int e = 1; e < 5; ++e) CHECK(means[e] < means[e - 1]);
}

TEST_CASE("same seed and data give an identical loss history") {
    const auto data = city(10, 48, 2);
    const auto a = train(data, tiny_config());
    const auto b = train(data, tiny_config());
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].loss.total == b.history[i].loss.total);
        CHECK(a.history[i].batch_ids == b.history[i].batch_ids);
    }
    auto other = tiny_config();
    other.seed = 5;
    CHECK(train(data, other).history.front().loss.total != a.history.front().loss.total);
}

TEST_CASE("with only L^i enabled, f^o and f^io receive no gradient") {
    const auto data = city(10, 48, 3);
    auto c = tiny_config();
    c.loss = {true, false, false, false};
    const auto state = train(data, c);
    REQUIRE(!state.history.empty());
    for (const auto& r : state.history) {
        CHECK(r.encoder_grad_norm[0] > 0.0);
        CHECK(r.encoder_grad_norm[1] == 0.0);
        CHECK(r.encoder_grad_norm[2] == 0.0);
        CHECK(r.head_grad_norm[1] == 0.0);
        CHECK(r.head_grad_norm[2] == 0.0);
    }
    const auto init = encoder::init_model(c.model, derive_seed(c.seed, 0x1417));
    CHECK(encoder::squared_norm(state.model.encoder(encoder::Flow::Outbound)) ==
          encoder::squared_norm(init.encoder(encoder::Flow::Outbound)));
}

TEST_CASE("batching drops a trailing singleton and covers every region once per epoch") {
    const auto data = city(9, 24, 4);
    auto c = tiny_config();
    c.epochs = 1;
    const auto state = train(data, c);
    CHECK(state.history.size() == 2);  // 4 + 4, the ninth region is left over
    std::set<std::string> seen;
    for (const auto& r : state.history) seen.insert(r.batch_ids.begin(), r.batch_ids.end());
    CHECK(seen.size() == 8);
}

TEST_CASE("training on a subset only ever batches those regions") {
    const auto data = city(12, 24, 5);
    std::vector<std::size_t> subset = {0, 2, 4, 6, 8, 10};
    const auto state = train(data, tiny_config(), subset);
    for (const auto& r : state.history)
        for (const auto& id : r.batch_ids) {
            const auto pos = std::find(data.region_ids.begin(), data.region_ids.end(), id) - data.region_ids.begin();
            CHECK(pos % 2 == 0);
        }
}

TEST_CASE("train argument errors") {
    auto one = city(8, 24, 6);
    one.values.resize(1);
    one.region_ids.resize(1);
    CHECK_THROWS_AS(train(one, tiny_config()), ArgumentError);
    auto c = tiny_config();
    c.batch_size = 1;
    CHECK_THROWS(c.validate());
}

TEST_CASE("divergence aborts with the failing step") {
    const auto data = city(8, 24, 7);
    auto c = tiny_config();
    c.optimizer = OptimizerKind::Sgd;
    c.learning_rate = 1e308;
    try {
        train(data, c);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
}

TEST_CASE("cached views reuse the first epoch draws") {
    const Mat x = testing::random_mat(24, 2, 8);
    auto c = tiny_config();
    c.cached_views = true;
    CHECK(region_views(x, c, 0, 3).view_a == region_views(x, c, 5, 3).view_a);
    c.cached_views = false;
    CHECK(region_views(x, c, 0, 3).view_a != region_views(x, c, 5, 3).view_a);
    CHECK(region_views(x, c, 0, 3).view_a != region_views(x, c, 0, 4).view_a);
}

TEST_CASE("embed_regions shape, determinism and sources") {
    const auto data = city(77, 336, 9);
    const auto model = encoder::init_model(encoder::ModelConfig{}, 3);
    const auto emb = embed_regions(data, model);
    CHECK(emb.matrix.rows() == 77);
    CHECK(emb.matrix.cols() == 128);
    CHECK(emb.matrix.allFinite());
    CHECK(embed_regions(data, model).matrix == emb.matrix);

    const Mat hi = objectives::temporal_mean_pool(encode(encoder::flow_input(data.values[5], encoder::Flow::Inbound),
                                                         model.encoder(encoder::Flow::Inbound)));
    const auto in = embed_regions(data, model, EmbeddingSource::Inbound);
    CHECK((in.matrix.row(5) - hi).cwiseAbs().maxCoeff() < 1e-12);
    const auto out = embed_regions(data, model, EmbeddingSource::Outbound);
    const auto mean = embed_regions(data, model, EmbeddingSource::MeanFlow);
    CHECK((mean.matrix - 0.5 * (in.matrix + out.matrix)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a constant region embeds like a single timestep") {
    ingest::MobilitySeries s;
    s.region_ids = {"flat", "busy"};
    s.hours = 40;
    s.counts.assign(2 * 40 * 2, 7);
    for (std::int64_t t = 0; t < 40; ++t) s.at(1, t, 0) = t % 5;
    const auto data = ingest::zscore(s);
    const auto& flat = data.values[0];

    // Freshly initialized (zero-bias) model: the pooled embedding is the T=1 representation.
    const auto init = encoder::init_model(tiny_config().model, 2);
    const Mat single = encode(flat.topRows(1), init.encoder(encoder::Flow::Joint));
    CHECK((embed_regions(data, init).matrix.row(0) - single.row(0)).cwiseAbs().maxCoeff() == 0.0);

    // With biases the zero padding makes the first and last receptive radius differ from the
    // interior, so only the interior is time-constant.
    auto model = init;
    Rng rng(1);
    std::normal_distribution<double> n(0.0, 0.5);
    encoder::for_each_tensor(model, [&](const std::string& name, Mat& t) {
        if (name.find("bias") != std::string::npos)
            for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
    });
    const auto& enc = model.encoder(encoder::Flow::Joint);
    const Mat h = encode(flat, enc);
    const int r = enc.config.receptive_radius();
    for (int t = r + 1; t < 40 - r; ++t) CHECK((h.row(t) - h.row(r)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((h.row(0) - h.row(r)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("embedding containers round-trip and are byte-stable") {
    const auto dir = testing::scratch_dir("trainer_emb");
    const auto data = city(8, 24, 10);
    const auto emb = embed_regions(data, encoder::init_model(tiny_config().model, 1));
    write_embeddings(dir / "a.bin", emb, "h");
    write_embeddings(dir / "b.bin", emb, "h");
    CHECK(testing::read_bytes(dir / "a.bin") == testing::read_bytes(dir / "b.bin"));
    const auto back = read_embeddings(dir / "a.bin");
    CHECK(back.matrix == emb.matrix);
    CHECK(back.region_ids == emb.region_ids);
    write_embeddings_csv(dir / "e.csv", emb);
    CHECK(testing::read_bytes(dir / "e.csv").rfind("region_id,e0,", 0) == 0);
}

TEST_CASE("loss log has one JSON line per step") {
    const auto dir = testing::scratch_dir("trainer_log");
    const auto state = train(city(8, 24, 11), tiny_config());
    write_loss_log(dir / "loss.jsonl", state.history);
    const auto text = testing::read_bytes(dir / "loss.jsonl");
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == state.history.size());
    CHECK(text.find("\"L_a\"") != std::string::npos);
}
