#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ildnet/model.hpp"
#include "support/gradcheck.hpp"

using namespace ildnet;

namespace {

ArchitectureSpec tiny_spec() {
    ArchitectureSpec s;
    s.conv_blocks = {{4, 3}};
    s.dense_units = {8};
    s.dropout_rates = {0.25};
    s.num_classes = 3;
    s.input_height = 4;
    s.input_width = 4;
    s.input_channels = 2;
    return s;
}

TensorF random_batch(std::uint64_t seed, Shape shape) {
    Rng rng(seed);
    TensorF t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    return t;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

void expect_load_error(const std::string& path, const std::string& needle) {
    try {
        load_checkpoint(path);
        FAIL("expected DataError loading " << path);
    } catch (const DataError& e) {
        CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
}

}  // namespace

TEST_CASE("default architecture has the expected parameter counts") {
    NetworkF net = NetworkF::build(ArchitectureSpec{}, 1);
    const std::vector<std::size_t> want = {4736, 128,    51264,  256,    55392,  384,
                                           110720, 512,  525312, 524800, 131328, 1285};
    CHECK(net.parameter_counts() == want);
    CHECK(net.parameter_total() == 1406117);
}

TEST_CASE("default architecture flattens to 512 units") {
    ArchitectureSpec spec;
    CHECK(spec.flatten_size() == 512);
}

TEST_CASE("three-block variant flattens to 1024 units") {
    ArchitectureSpec spec;
    spec.conv_blocks = {{16, 7}, {32, 5}, {64, 3}};
    CHECK(spec.flatten_size() == 1024);
    NetworkF net = NetworkF::build(spec, 1);
    TensorF probs = net.infer(random_batch(2, {2, 32, 32, 3}));
    CHECK(probs.shape() == Shape{2, 5});
}

TEST_CASE("forward reports every layer shape in order") {
    NetworkF net = NetworkF::build(ArchitectureSpec{}, 3);
    std::vector<std::pair<std::string, Shape>> rows;
    NetworkF::ShapeProbe probe = [&](const std::string& name, const Shape& s) {
        rows.emplace_back(name, s);
    };
    net.forward(random_batch(4, {2, 32, 32, 3}), Mode::infer, &probe);

    const std::vector<std::pair<std::string, Shape>> want = {
        {"input", {2, 32, 32, 3}},   {"conv1", {2, 32, 32, 32}}, {"bn1", {2, 32, 32, 32}},
        {"mp1", {2, 16, 16, 32}},    {"conv2", {2, 16, 16, 64}}, {"bn2", {2, 16, 16, 64}},
        {"mp2", {2, 8, 8, 64}},      {"conv3", {2, 8, 8, 96}},   {"bn3", {2, 8, 8, 96}},
        {"mp3", {2, 4, 4, 96}},      {"conv4", {2, 4, 4, 128}},  {"bn4", {2, 4, 4, 128}},
        {"mp4", {2, 2, 2, 128}},     {"flatten", {2, 512}},      {"dense1", {2, 1024}},
        {"dropout1", {2, 1024}},     {"dense2", {2, 512}},       {"dropout2", {2, 512}},
        {"dense3", {2, 256}},        {"dropout3", {2, 256}},     {"output", {2, 5}},
    };
    REQUIRE(rows.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(rows[i].first == want[i].first);
        CHECK(rows[i].second == want[i].second);
    }
}

TEST_CASE("fresh network emits sane probabilities") {
    NetworkF net = NetworkF::build(ArchitectureSpec{}, 9);
    TensorF probs = net.infer(random_batch(10, {4, 32, 32, 3}));
    for (std::size_t i = 0; i < probs.dim(0); ++i) {
        float sum = 0.0f;
        for (std::size_t j = 0; j < probs.dim(1); ++j) {
            const float p = probs.at2(i, j);
            CHECK(p > 0.005f);
            CHECK(p < 0.9f);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0f).epsilon(1e-5));
    }
}

TEST_CASE("inference is repeatable bit for bit") {
    NetworkF net = NetworkF::build(tiny_spec(), 21);
    TensorF batch = random_batch(22, {3, 4, 4, 2});
    TensorF a = net.infer(batch);
    TensorF b = net.infer(batch);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("identically seeded builds train identically") {
    const ArchitectureSpec spec = tiny_spec();
    NetworkF a = NetworkF::build(spec, 5);
    NetworkF b = NetworkF::build(spec, 5);
    TensorF batch = random_batch(6, {4, 4, 4, 2});
    for (int step = 0; step < 2; ++step) {
        TensorF pa = a.forward(batch, Mode::train);
        TensorF pb = b.forward(batch, Mode::train);
        for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
    }

    NetworkF c = NetworkF::build(spec, 7);
    auto wa = a.trainable_parameters();
    auto wc = c.trainable_parameters();
    bool any_differ = false;
    for (std::size_t i = 0; i < (*wa[0]).size(); ++i)
        if ((*wa[0])[i] != (*wc[0])[i]) any_differ = true;
    CHECK(any_differ);
}

TEST_CASE("argmax ties resolve to the lower class index") {
    TensorF probs({2, 3}, {0.2f, 0.4f, 0.4f, 0.5f, 0.3f, 0.2f});
    const std::vector<std::size_t> got = argmax_rows(probs);
    CHECK(got == std::vector<std::size_t>{1, 0});
}

TEST_CASE("backward requires a cached train-mode forward pass") {
    NetworkF net = NetworkF::build(tiny_spec(), 1);
    CHECK_THROWS_AS(net.backward(TensorF({3, 3})), ConfigError);
}

TEST_CASE("network rejects mismatched input shapes") {
    NetworkF net = NetworkF::build(tiny_spec(), 1);
    CHECK_THROWS_AS(net.infer(TensorF({2, 8, 8, 2})), ShapeError);
    CHECK_THROWS_AS(net.infer(TensorF({2, 4, 4, 3})), ShapeError);
    CHECK_THROWS_AS(net.infer(TensorF({4, 4, 2})), ShapeError);
}

TEST_CASE("architecture validation rejects bad layouts") {
    ArchitectureSpec s = tiny_spec();
    s.conv_blocks = {{4, 4}};
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = tiny_spec();
    s.dropout_rates = {0.25, 0.4};
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = tiny_spec();
    s.input_height = 5;
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = tiny_spec();
    s.num_classes = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);

    s = tiny_spec();
    s.dropout_rates = {1.0};
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("network gradients match finite differences end to end") {
    const ArchitectureSpec spec = tiny_spec();
    NetworkD net = NetworkD::build(spec, 31);
    net.set_dropout_enabled(false);  // finite differences need a fixed mask

    Rng rng(32);
    TensorD x = gradcheck::random_tensor(rng, {3, 4, 4, 2}, 0.0, 1.0);
    TensorD coeffs = gradcheck::random_tensor(rng, {3, spec.num_classes});

    TensorD probs = net.forward(x, Mode::train);

    // d loss / d logit for loss = sum(coeffs * probs) through the softmax:
    // dz_ij = p_ij * (c_ij - sum_k c_ik p_ik)
    TensorD d_logits(probs.shape());
    for (std::size_t i = 0; i < probs.dim(0); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < probs.dim(1); ++j) dot += coeffs.at2(i, j) * probs.at2(i, j);
        for (std::size_t j = 0; j < probs.dim(1); ++j)
            d_logits.at2(i, j) = probs.at2(i, j) * (coeffs.at2(i, j) - dot);
    }
    std::vector<TensorD> grads = net.backward(d_logits);
    std::vector<TensorD*> params = net.trainable_parameters();
    REQUIRE(grads.size() == params.size());

    const auto loss = [&] { return gradcheck::weighted_sum(net.forward(x, Mode::train), coeffs); };
    std::size_t checked = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        REQUIRE(grads[t].shape() == params[t]->shape());
        for (std::size_t i = 0; i < params[t]->size(); ++i) {
            const double numeric = gradcheck::central_diff(*params[t], i, loss);
            CHECK_MESSAGE(gradcheck::rel_err(grads[t][i], numeric) < gradcheck::kEndToEndTol,
                          "param " << t << " index " << i);
            ++checked;
        }
    }
    CHECK(checked == 247);
}

TEST_CASE("checkpoints round-trip the network exactly") {
    const std::string p1 = temp_path("ildnet_test_roundtrip_a.ckpt");
    const std::string p2 = temp_path("ildnet_test_roundtrip_b.ckpt");

    NetworkF net = NetworkF::build(tiny_spec(), 11);
    TensorF batch = random_batch(12, {4, 4, 4, 2});
    net.forward(batch, Mode::train);  // move running statistics off their init

    CheckpointMeta meta;
    meta.seed = 11;
    meta.epoch = 3;
    meta.config_hash = "00ff00ff00ff00ff";
    save_checkpoint(net, meta, p1);

    Checkpoint loaded = load_checkpoint(p1);
    CHECK(loaded.meta.seed == 11);
    CHECK(loaded.meta.epoch == 3);
    CHECK(loaded.meta.config_hash == "00ff00ff00ff00ff");
    CHECK(loaded.net.spec().conv_blocks.size() == 1);
    CHECK(loaded.net.spec().conv_blocks[0].filters == 4);
    CHECK(loaded.net.spec().conv_blocks[0].kernel == 3);
    CHECK(loaded.net.spec().dense_units == std::vector<std::size_t>{8});
    CHECK(loaded.net.spec().num_classes == 3);
    CHECK(loaded.net.spec().input_height == 4);
    CHECK(loaded.net.spec().input_channels == 2);

    auto a = net.parameter_blobs();
    auto b = loaded.net.parameter_blobs();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        REQUIRE(a[i].tensors.size() == b[i].tensors.size());
        for (std::size_t t = 0; t < a[i].tensors.size(); ++t) {
            REQUIRE(a[i].tensors[t]->shape() == b[i].tensors[t]->shape());
            for (std::size_t v = 0; v < a[i].tensors[t]->size(); ++v)
                CHECK((*a[i].tensors[t])[v] == (*b[i].tensors[t])[v]);
        }
    }

    TensorF pa = net.infer(batch);
    TensorF pb = loaded.net.infer(batch);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);

    save_checkpoint(loaded.net, loaded.meta, p2);
    CHECK(read_file(p1) == read_file(p2));

    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("checkpoint with an empty config hash round-trips") {
    const std::string path = temp_path("ildnet_test_nohash.ckpt");
    NetworkF net = NetworkF::build(tiny_spec(), 2);
    save_checkpoint(net, CheckpointMeta{}, path);
    CHECK(read_file(path).find("config_hash -\n") != std::string::npos);
    Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.meta.config_hash.empty());
    CHECK(loaded.meta.epoch == 0);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects malformed files") {
    const std::string good_path = temp_path("ildnet_test_good.ckpt");
    NetworkF net = NetworkF::build(tiny_spec(), 4);
    save_checkpoint(net, CheckpointMeta{}, good_path);
    const std::string good = read_file(good_path);

    const std::string bad = temp_path("ildnet_test_bad.ckpt");

    write_file(bad, "PNG\x01\x02 what\n");
    expect_load_error(bad, "not a checkpoint file");

    std::string wrong_version = good;
    wrong_version.replace(wrong_version.find(" v1\n"), 4, " v9\n");
    write_file(bad, wrong_version);
    expect_load_error(bad, "unsupported checkpoint version");

    write_file(bad, good.substr(0, good.size() - 4));
    expect_load_error(bad, "truncated payload");

    write_file(bad, good + "XXXX");
    expect_load_error(bad, "trailing bytes");

    std::string wrong_classes = good;
    wrong_classes.replace(wrong_classes.find("arch.classes 3"), 14, "arch.classes 4");
    write_file(bad, wrong_classes);
    expect_load_error(bad, "blob");

    std::string no_payload = good.substr(0, good.find("payload f32le"));
    write_file(bad, no_payload);
    expect_load_error(bad, "payload");

    expect_load_error(temp_path("ildnet_test_missing.ckpt"), "cannot open");

    std::filesystem::remove(good_path);
    std::filesystem::remove(bad);
}
