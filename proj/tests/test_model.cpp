#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mvpa/mvpa.hpp"

using namespace mvpa;

namespace {

SegmentGrid toy_grid(std::size_t channels, double window_s, std::uint64_t seed) {
  SynthConfig sc;
  sc.channels = channels;
  sc.duration_s = 2 * window_s;
  sc.sample_rate_hz = 64.0;
  const SynthResult sr = synth_generate(sc, seed);
  return segment(sr.series, window_s, 1.0, window_s)[0];
}

ModelConfig tiny_config() {
  ModelConfig cfg = ModelConfig::toy();
  cfg.n_layers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("derive_seed is stable and separates layers and purposes") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
}

TEST_CASE("rmsnorm rows") {
  Tensor x = Tensor::zeros({2, 2});
  x.at(0, 0) = 3.0;
  x.at(0, 1) = 4.0;
  x.at(1, 0) = -1.0;
  x.at(1, 1) = 1.0;
  const Tensor gain = Tensor::full({2}, 2.0);
  const double eps = 1e-6;
  const Tensor out = rmsnorm_rows_plain(x, gain, eps);
  const double inv0 = 1.0 / std::sqrt(12.5 + eps);
  CHECK(out.at(0, 0) == Catch::Approx(2.0 * 3.0 * inv0).epsilon(1e-12));
  CHECK(out.at(0, 1) == Catch::Approx(2.0 * 4.0 * inv0).epsilon(1e-12));
  const double inv1 = 1.0 / std::sqrt(1.0 + eps);
  CHECK(out.at(1, 0) == Catch::Approx(-2.0 * inv1).epsilon(1e-12));
}

TEST_CASE("mlp branch combination") {
  MlpParams p;
  p.W_u = Tensor::zeros({1, 2});
  p.W_g = Tensor::zeros({1, 2});
  p.W_s = Tensor::zeros({2, 1});
  p.W_u.at(0, 0) = 1.0;
  p.W_u.at(0, 1) = 2.0;
  p.W_g.at(0, 0) = 3.0;
  p.W_g.at(0, 1) = -1.0;
  p.W_s.at(0, 0) = 0.5;
  p.W_s.at(1, 0) = -1.0;
  Tensor z = Tensor::zeros({1, 2});
  z.at(0, 0) = 1.0;
  z.at(0, 1) = 1.0;
  const double u = 3.0, g = 2.0;
  const double silu_g = g / (1.0 + std::exp(-g));

  const Tensor additive = mlp_plain(z, p, false);
  CHECK(additive.at(0, 0) == Catch::Approx(0.5 * (u + silu_g)).epsilon(1e-12));
  CHECK(additive.at(0, 1) == Catch::Approx(-(u + silu_g)).epsilon(1e-12));

  const Tensor gated = mlp_plain(z, p, true);
  CHECK(gated.at(0, 0) == Catch::Approx(0.5 * (u * silu_g)).epsilon(1e-12));
  CHECK(!bitwise_equal(additive, gated));

  const Tensor zero_in = mlp_plain(Tensor::zeros({1, 2}), p, false);
  CHECK(zero_in.at(0, 0) == 0.0);
  CHECK(zero_in.at(0, 1) == 0.0);
}

TEST_CASE("parameter census: walked count equals the formula") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(cfg, 5);
  CHECK(param_count(collect_params(p)) == census_total(cfg));
  CHECK(census_total(cfg) == 30336);

  LoraConfig lora;
  std::vector<LayerAdapters> ads = init_adapters(p, lora, 6);
  CHECK(param_count(collect_adapters(ads)) == census_adapters(cfg, lora));
  CHECK(census_adapters(cfg, lora) == 1792);
}

TEST_CASE("census formulas at the full-scale layout") {
  const ModelConfig cfg = ModelConfig::small();
  CHECK(census_total(cfg) == 75446016u);
  LoraConfig lora;
  CHECK(census_adapters(cfg, lora) == 245760u);
}

TEST_CASE("collect_params enumerates every tensor with stable names") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(cfg, 7);
  const auto named = collect_params(p);
  REQUIRE(named.size() == 2 + 15 * cfg.n_layers);
  CHECK(named[0].name == "enc.proj");
  CHECK(named[1].name == "enc.bias");
  CHECK(named[2].name == "layers.0.norm_gain");
  CHECK(named.back().name == "layers.1.mlp.W_s");
  // tape ids line up with the same order
  Graph g;
  const ModelNodes nodes = lift_params(g, p, true);
  const auto ids = node_names(nodes);
  REQUIRE(ids.size() == named.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CHECK(ids[i].first == named[i].name);
    CHECK(bitwise_equal(g.val(ids[i].second), *named[i].tensor));
  }
}

TEST_CASE("plain forward equals the tape forward") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = ModelParams::init(cfg, 11);
  const SegmentGrid grid = toy_grid(3, 6.0, 12);
  const std::uint64_t seed = 13;

  const ModelOutput plain = model_forward(p, cfg, grid, seed, false);

  Graph g;
  const ModelNodes nodes = lift_params(g, p, true);
  const Tensor features = encoder_features(grid, cfg.dwt_level);
  const TapeForward tf = model_nodes_forward(g, nodes, features, cfg, grid.channels(),
                                             grid.segments(), seed, false);
  CHECK(max_abs_diff(g.val(tf.embeddings), plain.embeddings.rows) < 1e-10);
  CHECK(max_abs_diff(g.val(tf.outputs), plain.outputs.rows) < 1e-10);
}

TEST_CASE("forward is deterministic in the seed") {
  ModelConfig cfg = tiny_config();
  cfg.dropout_rate = 0.3;
  const ModelParams p = ModelParams::init(cfg, 21);
  const SegmentGrid grid = toy_grid(2, 6.0, 22);
  const ModelOutput a = model_forward(p, cfg, grid, 5, true);
  const ModelOutput b = model_forward(p, cfg, grid, 5, true);
  const ModelOutput c = model_forward(p, cfg, grid, 6, true);
  CHECK(bitwise_equal(a.outputs.rows, b.outputs.rows));
  CHECK(!bitwise_equal(a.outputs.rows, c.outputs.rows));
  // inference ignores the dropout setting
  const ModelOutput d = model_forward(p, cfg, grid, 5, false);
  const ModelOutput e = model_forward(p, cfg, grid, 99, false);
  CHECK(bitwise_equal(d.outputs.rows, e.outputs.rows));
}

TEST_CASE("zero-initialized adapter is an exact no-op") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = ModelParams::init(cfg, 31);
  LoraConfig lc;
  std::vector<LayerAdapters> ads = init_adapters(p, lc, 32);
  for (std::size_t l = 0; l < ads.size(); ++l) {
    const Tensor wq = lora_effective_weight(p.layers[l].attn.W_q, ads[l].q);
    CHECK(bitwise_equal(wq, p.layers[l].attn.W_q));
    const Tensor wv = lora_effective_weight(p.layers[l].attn.W_v, ads[l].v);
    CHECK(bitwise_equal(wv, p.layers[l].attn.W_v));
  }
}

TEST_CASE("nonzero adapter adds the scaled low-rank product") {
  Rng rng(41);
  LoraConfig lc;
  lc.rank = 2;
  lc.alpha = 6.0;
  LoraAdapter ad = LoraAdapter::init(3, 4, lc, rng);
  for (double& v : ad.B.data) v = rng.next_gaussian();
  const Tensor W = Tensor::gaussian({3, 4}, 1.0, rng);
  const Tensor eff = lora_effective_weight(W, ad);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double acc = W.at(i, j);
      for (std::size_t k = 0; k < 2; ++k) acc += 3.0 * ad.B.at(i, k) * ad.A.at(k, j);
      CHECK(eff.at(i, j) == Catch::Approx(acc).epsilon(1e-12));
    }
  const Tensor bad = Tensor::zeros({2, 4});
  CHECK_THROWS_AS(lora_effective_weight(bad, ad), std::invalid_argument);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(cfg, 51);
  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(path, collect_params(p));

  ModelParams q = ModelParams::init(cfg, 52);  // different seed: all tensors differ
  CHECK(!bitwise_equal(q.enc.proj, p.enc.proj));
  apply_checkpoint(load_checkpoint(path), collect_params(q));
  const auto np = collect_params(p);
  const auto nq = collect_params(q);
  for (std::size_t i = 0; i < np.size(); ++i) CHECK(bitwise_equal(*np[i].tensor, *nq[i].tensor));

  const SegmentGrid grid = toy_grid(2, 4.0, 53);
  const ModelOutput a = model_forward(p, cfg, grid);
  const ModelOutput b = model_forward(q, cfg, grid);
  CHECK(bitwise_equal(a.outputs.rows, b.outputs.rows));
  std::remove(path.c_str());
}

TEST_CASE("checkpoint error paths") {
  const ModelConfig cfg = tiny_config();
  ModelParams p = ModelParams::init(cfg, 61);
  const std::string path = "ckpt_errors.bin";
  save_checkpoint(path, collect_params(p));

  SECTION("missing tensor") {
    auto ckpt = load_checkpoint(path);
    ckpt.erase("layers.0.attn.W_q");
    CHECK_THROWS_WITH(apply_checkpoint(ckpt, collect_params(p)),
                      Catch::Matchers::ContainsSubstring("layers.0.attn.W_q"));
  }
  SECTION("shape mismatch") {
    auto ckpt = load_checkpoint(path);
    ckpt.at("enc.bias") = Tensor::zeros({3});
    CHECK_THROWS_WITH(apply_checkpoint(ckpt, collect_params(p)),
                      Catch::Matchers::ContainsSubstring("enc.bias"));
  }
  SECTION("bad header") {
    std::ofstream f("ckpt_bogus.bin", std::ios::binary);
    f << "something else\n";
    f.close();
    CHECK_THROWS_WITH(load_checkpoint("ckpt_bogus.bin"),
                      Catch::Matchers::ContainsSubstring("not a checkpoint"));
    std::remove("ckpt_bogus.bin");
  }
  SECTION("truncated blob") {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream f("ckpt_short.bin", std::ios::binary);
    f.write(all.data(), static_cast<std::streamsize>(all.size() - 128));
    f.close();
    CHECK_THROWS_AS(load_checkpoint("ckpt_short.bin"), std::runtime_error);
    std::remove("ckpt_short.bin");
  }
  std::remove(path.c_str());
}

TEST_CASE("classification head pools channels of the last segment") {
  EmbeddingGrid out(2, 2, 2);
  // cell (c, t) = row c*T + t
  out.row_of(0, 1)[0] = 1.0;
  out.row_of(0, 1)[1] = 2.0;
  out.row_of(1, 1)[0] = 3.0;
  out.row_of(1, 1)[1] = 4.0;
  ClassifyHead head;
  head.W = Tensor::zeros({2, 2});
  head.W.at(0, 0) = 1.0;
  head.W.at(1, 1) = 1.0;
  head.b = Tensor::zeros({2});
  head.b.at(0) = 0.5;
  head.b.at(1) = -0.5;
  const Tensor logits = classify_logits(out, head);
  // pooled = [2, 3]
  CHECK(logits.at(0) == Catch::Approx(2.5).epsilon(1e-15));
  CHECK(logits.at(1) == Catch::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("forecast head maps each channel's last segment to the horizon") {
  EmbeddingGrid out(2, 2, 2);
  out.row_of(0, 1)[0] = 1.0;
  out.row_of(0, 1)[1] = 2.0;
  out.row_of(1, 1)[0] = 3.0;
  out.row_of(1, 1)[1] = 4.0;
  ForecastHead head;
  head.W = Tensor::zeros({2, 2});
  head.W.at(0, 0) = 1.0;
  head.W.at(0, 1) = 1.0;
  head.W.at(1, 0) = 2.0;
  head.b = Tensor::zeros({2});
  head.b.at(1) = 1.0;
  const Tensor v = forecast_values(out, head);
  REQUIRE(v.dim(0) == 2);
  REQUIRE(v.dim(1) == 2);
  CHECK(v.at(0, 0) == 3.0);
  CHECK(v.at(0, 1) == 3.0);
  CHECK(v.at(1, 0) == 7.0);
  CHECK(v.at(1, 1) == 7.0);
}

TEST_CASE("model geometry flows from the segment grid") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = ModelParams::init(cfg, 71);
  const SegmentGrid grid = toy_grid(3, 5.0, 72);
  const ModelOutput out = model_forward(p, cfg, grid);
  CHECK(out.embeddings.C == 3);
  CHECK(out.embeddings.T == 5);
  CHECK(out.embeddings.d == cfg.d_model);
  CHECK(out.outputs.C == 3);
  CHECK(out.outputs.T == 5);
}
