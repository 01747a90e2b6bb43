#include <doctest.h>

#include <random>

#include "encoder.hpp"
#include "fixtures.hpp"

using namespace sdm::nn;

namespace {

int64_t conv3(int64_t i, int64_t o) { return 9 * i * o + o; }
int64_t conv1(int64_t i, int64_t o) { return i * o + o; }
int64_t res(int64_t i, int64_t o) { return 2 * i + conv3(i, o) + 2 * o + conv3(o, o) + (i != o ? conv1(i, o) : 0); }

// Closed-form parameter count of the encoder layout.
int64_t encoder_params(const std::vector<int>& w) {
  int64_t n = 2 * (conv3(1, w[0]) + res(w[0], w[0]) + res(w[0], w[1]));
  n += conv1(2 * w[1], w[1]);
  for (std::size_t i = 2; i < w.size(); ++i) n += res(w[i - 1], w[i]);
  const int64_t c = w.back();
  n += 2 * c + 4 * conv1(c, c);
  return n;
}

}  // namespace

TEST_CASE("default pyramid sizes") {
  torch::manual_seed(0);
  OrthoCrossEncoder enc(EncoderConfig{});
  auto pyr = enc->forward(torch::rand({2, 1, 64, 64}), torch::rand({2, 1, 64, 64}));
  REQUIRE(pyr.levels.size() == 3);
  const std::vector<std::vector<int64_t>> want{{2, 128, 5, 6}, {2, 128, 10, 12}, {2, 64, 20, 25}};
  for (int l = 0; l < 3; ++l) CHECK(pyr.levels[l].sizes().vec() == want[l]);

  // sizes do not depend on content
  auto zero = enc->forward(torch::zeros({1, 1, 64, 64}), torch::zeros({1, 1, 64, 64}));
  for (int l = 0; l < 3; ++l) CHECK(zero.levels[l].sizes().slice(1) == pyr.levels[l].sizes().slice(1));
}

TEST_CASE("zero input is deterministic") {
  torch::manual_seed(1);
  OrthoCrossEncoder enc(fixtures::tiny_model().encoder);
  auto h = torch::zeros({2, 1, 8, 8});
  auto a = enc->forward(h, h);
  auto b = enc->forward(h, h);
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    CHECK(torch::equal(a.levels[l], b.levels[l]));
    // identical inputs across the batch give identical responses
    CHECK(torch::equal(a.levels[l][0], a.levels[l][1]));
  }
}

TEST_CASE("shape mismatches are rejected") {
  OrthoCrossEncoder enc(fixtures::tiny_model().encoder);
  auto ok = torch::zeros({1, 1, 8, 8});
  CHECK(fixtures::code_of([&] { enc->forward(torch::zeros({1, 1, 9, 8}), ok); }) == sdm::ErrorCode::Shape);
  CHECK(fixtures::code_of([&] { enc->forward(ok, torch::zeros({2, 1, 8, 8})); }) == sdm::ErrorCode::Shape);
}

TEST_CASE("mirror equivariance with column-symmetric kernels") {
  torch::manual_seed(2);
  auto cfg = fixtures::tiny_model().encoder;
  cfg.levels = {{3, 4}, {5, 8}, {9, 16}};
  OrthoCrossEncoder enc(cfg);
  enc->to(torch::kFloat64);
  {
    torch::NoGradGuard g;
    for (auto& p : enc->parameters()) {
      if (p.dim() == 4 && p.size(-1) == 3) p.copy_((p + p.flip(-1)) / 2);
    }
  }
  auto hor = torch::rand({2, 1, 8, 8}, torch::kFloat64);
  auto ver = torch::rand({2, 1, 8, 8}, torch::kFloat64);
  auto a = enc->forward(hor, ver);
  auto b = enc->forward(hor.flip(-1), ver.flip(-1));
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    CHECK((a.levels[l].flip(-1) - b.levels[l]).abs().max().item<double>() < 1e-5);
  }
}

TEST_CASE("finite-difference gradient of the pyramid sum") {
  torch::manual_seed(3);
  OrthoCrossEncoder enc(fixtures::tiny_model().encoder);
  enc->to(torch::kFloat64);
  auto hor = torch::rand({1, 1, 8, 8}, torch::kFloat64).requires_grad_(true);
  auto ver = torch::rand({1, 1, 8, 8}, torch::kFloat64).requires_grad_(true);
  auto probe = [&](const torch::Tensor& h, const torch::Tensor& v) {
    auto p = enc->forward(h, v);
    auto s = torch::zeros({}, torch::kFloat64);
    for (const auto& l : p.levels) s = s + l.sum();
    return s;
  };
  probe(hor, ver).backward();
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> pix(0, 63), view(0, 1);
  torch::NoGradGuard g;
  for (int k = 0; k < 16; ++k) {
    const int which = view(rng), i = pix(rng);
    auto& x = which == 0 ? hor : ver;
    const double eps = 1e-6;
    auto plus = x.detach().clone(), minus = x.detach().clone();
    plus.view({-1})[i] += eps;
    minus.view({-1})[i] -= eps;
    const double fd = which == 0 ? (probe(plus, ver) - probe(minus, ver)).item<double>() / (2 * eps)
                                 : (probe(hor, plus) - probe(hor, minus)).item<double>() / (2 * eps);
    const double bp = x.grad().view({-1})[i].item<double>();
    CHECK(fixtures::rel_err(fd, bp) < 1e-3);
  }
}

TEST_CASE("parameter counts follow the layer arithmetic") {
  auto cfg = fixtures::tiny_model().encoder;
  cfg.widths = {8, 16, 16, 16};
  auto wide = cfg;
  wide.widths = {16, 32, 32, 32};
  const auto n1 = count_parameters(*OrthoCrossEncoder(cfg));
  const auto n2 = count_parameters(*OrthoCrossEncoder(wide));
  CHECK(n1 == encoder_params(cfg.widths));
  CHECK(n2 == encoder_params(wide.widths));
  CHECK(n2 - n1 == encoder_params(wide.widths) - encoder_params(cfg.widths));
  CHECK(count_parameters(*OrthoCrossEncoder(cfg)) == n1);

  auto bad = cfg;
  bad.widths.clear();
  bad.levels.clear();
  CHECK(fixtures::code_of([&] { OrthoCrossEncoder e(bad); }) == sdm::ErrorCode::InvalidArgument);
}
