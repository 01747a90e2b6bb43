#include <doctest.h>

#include <random>

#include "denoiser.hpp"
#include "fixtures.hpp"
#include "sampler.hpp"
#include "schedule.hpp"

using namespace sdm::nn;

namespace {

torch::Tensor random_mask(int64_t b, int64_t h, int64_t w) { return (torch::rand({b, h, w}) > 0.6).to(torch::kLong); }

}  // namespace

TEST_CASE("label embedding range and locality") {
  torch::manual_seed(0);
  FrameModel m(fixtures::tiny_model());
  auto mask = random_mask(2, 16, 24);
  auto emb = m->embed_labels(mask);
  CHECK(emb.sizes().vec() == std::vector<int64_t>{2, 4, 16, 24});
  CHECK(emb.min().item<float>() > 0.0f);
  CHECK(emb.max().item<float>() < 1.0f);

  auto zeros = m->embed_labels(torch::zeros({1, 16, 24}, torch::kLong));
  auto row0 = torch::sigmoid(m->codec->table[0]).reshape({4, 1, 1});
  CHECK(torch::allclose(zeros[0], row0.expand({4, 16, 24}), 1e-6, 1e-7));

  auto other = mask.clone();
  other[1][5][7] = 1 - other[1][5][7];
  auto diff = (m->embed_labels(other) - emb).abs().sum(1);
  CHECK(diff[1][5][7].item<float>() > 0);
  diff[1][5][7] = 0;
  CHECK(diff.max().item<float>() == 0.0f);

  CHECK(fixtures::code_of([&] { m->embed_labels(torch::full({1, 16, 24}, 2, torch::kLong)); }) ==
        sdm::ErrorCode::InvalidArgument);
}

TEST_CASE("decode ties go to background") {
  auto logits = torch::zeros({1, 2, 3, 3});
  logits[0][1][1][1] = 1.0;
  auto labels = labels_from_logits(logits);
  CHECK(labels.sum().item<int64_t>() == 1);
  CHECK(labels[0][1][1].item<int>() == 1);

  FrameModel m(fixtures::tiny_model());
  auto out = labels_from_logits(m->decode_logits(torch::rand({2, 4, 16, 24})));
  CHECK(out.sizes().vec() == std::vector<int64_t>{2, 16, 24});
  CHECK(out.max().item<int>() <= 1);
}

TEST_CASE("CTB residual identity and uniform attention") {
  torch::manual_seed(1);
  Ctb ctb(6, 5, 4);
  auto f = torch::randn({2, 6, 4, 4});
  auto c = torch::randn({2, 5, 3, 3});
  CHECK(torch::equal(ctb->forward(f, c), f));

  // constant condition: every key is equal, so attention is a plain mean of V
  ctb->to(torch::kFloat64);
  torch::NoGradGuard g;
  ctb->w_ctb->weight.normal_();
  auto f64 = torch::randn({1, 6, 3, 3}, torch::kFloat64);
  auto col = torch::randn({1, 5, 1, 1}, torch::kFloat64);
  auto cond = col.expand({1, 5, 3, 3}).contiguous();
  auto out = ctb->forward(f64, cond);
  // brute force: V for each of the 9 condition pixels, uniform weights 1/9
  auto wv = ctb->w_v->weight.reshape({4, 5});
  auto v = torch::matmul(wv, col.reshape({5, 1}));         // same value at every pixel
  auto mean_v = v;                                         // mean of identical rows
  auto delta = torch::matmul(ctb->w_ctb->weight, mean_v);  // [6, 1]
  auto expect = f64 + delta.reshape({1, 6, 1, 1});
  CHECK((out - expect).abs().max().item<double>() < 1e-12);

  // brute-force 3x3 attention for a non-constant condition
  auto cond2 = torch::randn({1, 5, 3, 3}, torch::kFloat64);
  auto q = torch::matmul(ctb->w_q->weight.reshape({4, 6}), f64.reshape({6, 9}));  // [4, 9]
  auto k = torch::matmul(ctb->w_k->weight.reshape({4, 5}), cond2.reshape({5, 9}));
  auto vv = torch::matmul(wv, cond2.reshape({5, 9}));
  auto manual = f64.reshape({6, 9}).clone();
  for (int p = 0; p < 9; ++p) {
    std::vector<double> s(9);
    double mx = -1e300;
    for (int j = 0; j < 9; ++j) {
      s[j] = (q.select(1, p) * k.select(1, j)).sum().item<double>() / 2.0;
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (auto& x : s) z += (x = std::exp(x - mx));
    auto acc = torch::zeros({4}, torch::kFloat64);
    for (int j = 0; j < 9; ++j) acc += (s[j] / z) * vv.select(1, j);
    manual.select(1, p) += torch::matmul(ctb->w_ctb->weight, acc);
  }
  CHECK((ctb->forward(f64, cond2).reshape({6, 9}) - manual).abs().max().item<double>() < 1e-12);

  CHECK(fixtures::code_of([&] { ctb->forward(torch::zeros({1, 5, 3, 3}, torch::kFloat64), cond2); }) ==
        sdm::ErrorCode::Shape);
}

TEST_CASE("CTB commutes with pixel permutations") {
  torch::manual_seed(2);
  Ctb ctb(4, 4, 4);
  {
    torch::NoGradGuard g;
    ctb->w_ctb->weight.normal_();
  }
  auto f = torch::randn({1, 4, 4, 4});
  auto c = torch::randn({1, 4, 4, 4});
  auto perm = torch::randperm(16);
  auto permute = [&](const torch::Tensor& x) {
    return x.reshape({1, 4, 16}).index_select(2, perm).reshape({1, 4, 4, 4});
  };
  auto a = permute(ctb->forward(f, c));
  auto b = ctb->forward(permute(f), permute(c));
  CHECK((a - b).abs().max().item<float>() < 1e-5);
}

TEST_CASE("denoiser shapes, site plan and conditioning") {
  torch::manual_seed(3);
  auto cfg = fixtures::tiny_model();
  FrameModel m(cfg);
  CHECK(m->sites().size() == 7);
  auto pyr = m->encode(torch::rand({2, 1, 8, 8}), torch::rand({2, 1, 8, 8}));
  auto y = torch::randn({2, 4, 16, 24});
  auto t = torch::tensor({3, 17}, torch::kLong);
  auto out = m->denoise(y, t, pyr);
  CHECK(out.pred_noise.sizes() == y.sizes());
  CHECK(out.pred_var_logit.sizes() == y.sizes());

  // fresh CTBs sever the condition: permuting pyramid contents changes nothing
  ConditionPyramid shuffled;
  for (const auto& l : pyr.levels) shuffled.levels.push_back(l.flip({0, 2, 3}) * 3 + 1);
  auto again = m->denoise(y, t, shuffled);
  CHECK(torch::equal(out.pred_noise, again.pred_noise));
  CHECK(torch::equal(out.pred_var_logit, again.pred_var_logit));

  ConditionPyramid short_pyr;
  short_pyr.levels.push_back(pyr.levels[0]);
  CHECK(fixtures::code_of([&] { m->denoise(y, t, short_pyr); }) == sdm::ErrorCode::Shape);

  // full-scale site mapping: each UNet size takes the nearest pyramid level
  auto sites = plan_sites(ModelConfig::full());
  REQUIRE(sites.size() == 7);
  CHECK(sites[0].size == sdm::data::GridSize{160, 200});
  CHECK(sites[3].size == sdm::data::GridSize{20, 25});
  CHECK(sites[3].level == 2);
  CHECK(sites[2].level == 2);
  CHECK(sites[1].level == 2);
}

TEST_CASE("finite-difference gradient of the noise prediction") {
  torch::manual_seed(4);
  FrameModel m(fixtures::tiny_model());
  m->to(torch::kFloat64);
  {
    torch::NoGradGuard g;
    for (int b = 0; b < 7; ++b) m->ctb(b)->w_ctb->weight.normal_(0, 0.1);
  }
  auto pyr = m->encode(torch::rand({1, 1, 8, 8}, torch::kFloat64), torch::rand({1, 1, 8, 8}, torch::kFloat64));
  auto t = torch::tensor({9}, torch::kLong);
  auto y = torch::randn({1, 4, 16, 24}, torch::kFloat64).requires_grad_(true);
  m->denoise(y, t, pyr).pred_noise.mean().backward();
  std::mt19937 rng(5);
  std::uniform_int_distribution<int> pix(0, static_cast<int>(y.numel()) - 1);
  torch::NoGradGuard g;
  for (int k = 0; k < 8; ++k) {
    const int i = pix(rng);
    const double eps = 1e-6;
    auto plus = y.detach().clone(), minus = y.detach().clone();
    plus.view({-1})[i] += eps;
    minus.view({-1})[i] -= eps;
    const double fd =
        (m->denoise(plus, t, pyr).pred_noise.mean() - m->denoise(minus, t, pyr).pred_noise.mean()).item<double>() /
        (2 * eps);
    CHECK(fixtures::rel_err(fd, y.grad().view({-1})[i].item<double>()) < 1e-3);
  }
}

TEST_CASE("sampling: T denoise calls, determinism, binary output") {
  torch::manual_seed(5);
  FrameModel m(fixtures::tiny_model());
  m->eval();
  auto sched = sdm::diffusion::make_linear_schedule(25);
  auto hor = torch::rand({3, 1, 8, 8}), ver = torch::rand({3, 1, 8, 8});
  int calls = 0;
  std::vector<int> order;
  auto g1 = make_generator(42);
  auto a = sample_frames(m, hor, ver, sched, g1, [&](int t) {
    ++calls;
    order.push_back(t);
  });
  CHECK(calls == 25);
  CHECK(order.front() == 25);
  CHECK(order.back() == 1);
  auto g2 = make_generator(42);
  auto b = sample_frames(m, hor, ver, sched, g2);
  CHECK(torch::equal(a, b));
  CHECK(a.sizes().vec() == std::vector<int64_t>{3, 16, 24});
  CHECK((a.scalar_type() == torch::kUInt8));
  CHECK(a.max().item<int>() <= 1);
}

TEST_CASE("frame-model parameter paths") {
  FrameModel m(fixtures::tiny_model());
  bool sdn = false, ctb = false, embed = false, och = false;
  for (const auto& [name, p] : named_parameters(*m)) {
    sdn |= name.rfind("sdn/", 0) == 0;
    ctb |= name.rfind("ctb/6/w_ctb/", 0) == 0;
    embed |= name == "embed/table";
    och |= name.rfind("och/", 0) == 0;
  }
  CHECK(sdn);
  CHECK(ctb);
  CHECK(embed);
  CHECK(och);
}
