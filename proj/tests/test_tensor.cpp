#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flap/grad_check.hpp"
#include "flap/rng.hpp"
#include "flap/tape.hpp"
#include "flap/tensor.hpp"

using namespace flap;

namespace {

// Fixed random weights turn vector outputs into a non-degenerate scalar.
Tensor weighted_sum_target(std::vector<size_t> shape, uint64_t seed) {
  Rng rng(seed);
  return Tensor::randn(std::move(shape), rng);
}

}  // namespace

TEST_CASE("grad_check oracle on sum of squares") {
  Tensor x = Tensor::from_data({3}, {1.0, 2.0, 3.0});
  auto f = [](Tape& tape, const Tensor& t) { return tape.sum(tape.mul(t, t)); };

  x.set_requires_grad(true);
  Tape tape;
  Tensor loss = f(tape, x);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(x.grad()[2] == doctest::Approx(6.0).epsilon(1e-12));

  CHECK(grad_check(f, Tensor::from_data({3}, {1.0, 2.0, 3.0})) < 1e-8);
}

TEST_CASE("matmul identity cases") {
  Tensor i2 = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tape tape;
  Tensor out = tape.matmul(i2, i2);
  CHECK(out.vec() == std::vector<double>{1, 0, 0, 1});

  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out2 = tape.matmul(a, i2);
  CHECK(out2.vec() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("matmul shape error names both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  Tape tape;
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       doctest::Contains("[2,3]"), std::invalid_argument);
  try {
    tape.matmul(a, b);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("gradient of sum(A@B) w.r.t. A equals ones @ B^T") {
  Rng rng(3);
  Tensor a = Tensor::randn({3, 4}, rng, 1.0, true);
  Tensor b = Tensor::randn({4, 5}, rng);

  Tape tape;
  Tensor loss = tape.sum(tape.matmul(a, b));
  tape.backward(loss);

  // d/dA sum(AB) = ones(3,5) @ B^T; entry (i,k) = sum_j B[k,j].
  for (size_t i = 0; i < 3; ++i) {
    for (size_t k = 0; k < 4; ++k) {
      double expected = 0.0;
      for (size_t j = 0; j < 5; ++j) expected += b.at(k, j);
      CHECK(a.grad()[i * 4 + k] == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  auto f = [&b](Tape& t, const Tensor& x) { return t.sum(t.matmul(x, b)); };
  CHECK(grad_check(f, Tensor::randn({3, 4}, rng)) < 1e-6);
}

TEST_CASE("softmax values and stability") {
  Tape tape;
  Tensor x = Tensor::from_data({3}, {0.0, 0.0, 0.0});
  Tensor y = tape.softmax_lastdim(x);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(y.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  Tensor big = Tensor::from_data({2}, {1000.0, 0.0});
  Tensor yb = tape.softmax_lastdim(big);
  CHECK(std::isfinite(yb.at(0)));
  CHECK(yb.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(yb.at(1) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor bad = Tensor::from_data({2}, {std::nan(""), 0.0});
  CHECK_THROWS_AS(tape.softmax_lastdim(bad), std::domain_error);
}

TEST_CASE("softmax rows are a distribution") {
  Rng rng(5);
  Tensor x = Tensor::randn({6, 9}, rng, 3.0);
  Tape tape;
  Tensor y = tape.softmax_lastdim(x);
  for (size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (size_t j = 0; j < 9; ++j) {
      CHECK(y.at(r, j) >= 0.0);
      sum += y.at(r, j);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("cosine similarity identities and guard") {
  Tape tape;
  Rng rng(6);
  Tensor v = Tensor::randn({4}, rng);
  CHECK(tape.cosine_similarity(v, v).value() == doctest::Approx(1.0).epsilon(1e-12));

  Tensor e1 = Tensor::from_data({2}, {1, 0});
  Tensor e2 = Tensor::from_data({2}, {0, 1});
  CHECK(tape.cosine_similarity(e1, e2).value() == 0.0);

  Tensor zero = Tensor::zeros({2});
  CHECK(std::isfinite(tape.cosine_similarity(zero, e1).value()));
}

TEST_CASE("fan-out accumulates rather than overwrites") {
  Tensor x = Tensor::from_data({2}, {3.0, -1.0}, true);
  Tape tape;
  // x appears in two branches: sum(x*x) + sum(x) -> grad 2x + 1.
  Tensor loss = tape.add(tape.sum(tape.mul(x, x)), tape.sum(x));
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("every primitive passes grad_check on 5 random inputs") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 101);

    // matmul, both operands
    {
      Tensor b = Tensor::randn({4, 3}, rng);
      auto f = [&b](Tape& t, const Tensor& x) { return t.sum(t.matmul(x, b)); };
      CHECK(grad_check(f, Tensor::randn({2, 4}, rng)) < 1e-4);
      Tensor a = Tensor::randn({2, 4}, rng);
      auto g = [&a](Tape& t, const Tensor& x) { return t.sum(t.matmul(a, x)); };
      CHECK(grad_check(g, Tensor::randn({4, 3}, rng)) < 1e-4);
    }
    // bmm
    {
      Tensor b = Tensor::randn({2, 3, 2}, rng);
      auto f = [&b](Tape& t, const Tensor& x) { return t.sum(t.bmm(x, b)); };
      CHECK(grad_check(f, Tensor::randn({2, 2, 3}, rng)) < 1e-4);
      Tensor a = Tensor::randn({2, 2, 3}, rng);
      auto g = [&a](Tape& t, const Tensor& x) { return t.sum(t.bmm(a, x)); };
      CHECK(grad_check(g, Tensor::randn({2, 3, 2}, rng)) < 1e-4);
    }
    // softmax through a weighted sum
    {
      Tensor w = weighted_sum_target({3, 5}, seed);
      auto f = [&w](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.softmax_lastdim(x), w));
      };
      CHECK(grad_check(f, Tensor::randn({3, 5}, rng)) < 1e-4);
    }
    // layernorm w.r.t. input, gain and bias
    {
      Tensor gain = Tensor::randn({6}, rng);
      Tensor bias = Tensor::randn({6}, rng);
      Tensor w = weighted_sum_target({4, 6}, seed + 10);
      auto f = [&](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.layernorm_lastdim(x, gain, bias), w));
      };
      CHECK(grad_check(f, Tensor::randn({4, 6}, rng)) < 1e-4);
      Tensor x = Tensor::randn({4, 6}, rng);
      auto fg = [&](Tape& t, const Tensor& g) {
        return t.sum(t.mul(t.layernorm_lastdim(x, g, bias), w));
      };
      CHECK(grad_check(fg, Tensor::randn({6}, rng)) < 1e-4);
      auto fb = [&](Tape& t, const Tensor& b2) {
        return t.sum(t.mul(t.layernorm_lastdim(x, gain, b2), w));
      };
      CHECK(grad_check(fb, Tensor::randn({6}, rng)) < 1e-4);
    }
    // gelu
    {
      auto f = [](Tape& t, const Tensor& x) { return t.sum(t.gelu(x)); };
      CHECK(grad_check(f, Tensor::randn({7}, rng)) < 1e-4);
    }
    // exp, scale, mul_scalar
    {
      auto f = [](Tape& t, const Tensor& x) {
        return t.sum(t.exp_elem(t.scale(x, 0.7)));
      };
      CHECK(grad_check(f, Tensor::randn({5}, rng)) < 1e-4);
      Tensor x = Tensor::randn({5}, rng);
      auto fs = [&x](Tape& t, const Tensor& s) {
        return t.sum(t.mul_scalar(x, s));
      };
      CHECK(grad_check(fs, Tensor::randn({1}, rng)) < 1e-4);
    }
    // add_bias / add_rows
    {
      Tensor x = Tensor::randn({3, 4}, rng);
      auto f = [&x](Tape& t, const Tensor& b) {
        return t.sum(t.mul(t.add_bias(x, b), t.add_bias(x, b)));
      };
      CHECK(grad_check(f, Tensor::randn({4}, rng)) < 1e-4);
      Tensor x3 = Tensor::randn({2, 3, 4}, rng);
      auto fr = [&x3](Tape& t, const Tensor& tab) {
        return t.sum(t.mul(t.add_rows(x3, tab), t.add_rows(x3, tab)));
      };
      CHECK(grad_check(fr, Tensor::randn({3, 4}, rng)) < 1e-4);
    }
    // reductions and normalization
    {
      Tensor w = weighted_sum_target({2, 4}, seed + 20);
      auto f = [&w](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.mean_axis1(x), w));
      };
      CHECK(grad_check(f, Tensor::randn({2, 3, 4}, rng)) < 1e-4);

      std::vector<double> weights = {1, 1, 0, 1, 0, 0};  // [2,3] pad pattern
      auto fm = [&w, &weights](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.masked_mean_axis1(x, weights), w));
      };
      CHECK(grad_check(fm, Tensor::randn({2, 3, 4}, rng)) < 1e-4);

      Tensor w2 = weighted_sum_target({3, 5}, seed + 30);
      auto fn = [&w2](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.l2_normalize_rows(x), w2));
      };
      CHECK(grad_check(fn, Tensor::randn({3, 5}, rng)) < 1e-4);
    }
    // structure ops
    {
      Tensor w = weighted_sum_target({8, 2, 3}, seed + 40);
      auto f = [&w](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.head_split(x, 4), w));
      };
      CHECK(grad_check(f, Tensor::randn({2, 2, 12}, rng)) < 1e-4);
      auto g = [&w](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.head_merge(t.head_split(x, 4), 4),
                           t.reshape(t.head_merge(w, 4), {2, 2, 12})));
      };
      CHECK(grad_check(g, Tensor::randn({2, 2, 12}, rng)) < 1e-4);
      auto ft = [](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.transpose(x), t.transpose(x)));
      };
      CHECK(grad_check(ft, Tensor::randn({3, 4}, rng)) < 1e-4);
      auto ft12 = [](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.transpose_12(x), t.transpose_12(x)));
      };
      CHECK(grad_check(ft12, Tensor::randn({2, 3, 4}, rng)) < 1e-4);
    }
    // gather / scatter / embedding / permute / stack
    {
      std::vector<std::vector<size_t>> kept = {{0, 2}, {1, 3}};
      Tensor w = weighted_sum_target({2, 2, 3}, seed + 50);
      auto f = [&](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.gather_rows(x, kept), w));
      };
      CHECK(grad_check(f, Tensor::randn({2, 4, 3}, rng)) < 1e-4);

      Tensor w4 = weighted_sum_target({2, 4, 3}, seed + 60);
      Tensor mask_token = Tensor::randn({3}, rng);
      auto fs = [&](Tape& t, const Tensor& vis) {
        return t.sum(t.mul(t.scatter_restore(vis, mask_token, kept, 4), w4));
      };
      CHECK(grad_check(fs, Tensor::randn({2, 2, 3}, rng)) < 1e-4);
      auto fmt = [&](Tape& t, const Tensor& mt) {
        Tensor vis = Tensor::zeros({2, 2, 3});
        return t.sum(t.mul(t.scatter_restore(vis, mt, kept, 4), w4));
      };
      CHECK(grad_check(fmt, Tensor::randn({3}, rng)) < 1e-4);

      std::vector<int> ids = {0, 2, 1, 2};
      Tensor we = weighted_sum_target({2, 2, 3}, seed + 70);
      auto fe = [&](Tape& t, const Tensor& table) {
        return t.sum(t.mul(t.embedding(table, ids, 2, 2), we));
      };
      CHECK(grad_check(fe, Tensor::randn({3, 3}, rng)) < 1e-4);

      std::vector<size_t> perm = {5, 3, 1, static_cast<size_t>(-1), 0, 2};
      Tensor wp = weighted_sum_target({6}, seed + 80);
      auto fp = [&](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.permute_elements(x, perm, {6}), wp));
      };
      CHECK(grad_check(fp, Tensor::randn({6}, rng)) < 1e-4);
    }
    // conv2d merge: input, kernel and bias
    {
      Tensor kernel = Tensor::randn({4, 3, 3}, rng);
      Tensor bias = Tensor::randn({1}, rng);
      Tensor w = weighted_sum_target({5, 6}, seed + 90);
      auto f = [&](Tape& t, const Tensor& x) {
        return t.sum(t.mul(t.conv2d_merge(x, kernel, bias), w));
      };
      CHECK(grad_check(f, Tensor::randn({4, 5, 6}, rng)) < 1e-4);
      Tensor x = Tensor::randn({4, 5, 6}, rng);
      auto fk = [&](Tape& t, const Tensor& k) {
        return t.sum(t.mul(t.conv2d_merge(x, k, bias), w));
      };
      CHECK(grad_check(fk, Tensor::randn({4, 3, 3}, rng)) < 1e-4);
      auto fb = [&](Tape& t, const Tensor& b) {
        return t.sum(t.mul(t.conv2d_merge(x, kernel, b), w));
      };
      CHECK(grad_check(fb, Tensor::randn({1}, rng)) < 1e-4);
    }
    // losses
    {
      std::vector<size_t> targets = {1, 0, 2};
      auto f = [&targets](Tape& t, const Tensor& logits) {
        return t.cross_entropy_rows(logits, targets);
      };
      CHECK(grad_check(f, Tensor::randn({3, 4}, rng)) < 1e-4);

      Tensor b = Tensor::randn({5}, rng);
      auto fc = [&b](Tape& t, const Tensor& a) {
        return t.cosine_similarity(a, b);
      };
      CHECK(grad_check(fc, Tensor::randn({5}, rng)) < 1e-4);
      Tensor a = Tensor::randn({5}, rng);
      auto fc2 = [&a](Tape& t, const Tensor& x) {
        return t.cosine_similarity(a, x);
      };
      CHECK(grad_check(fc2, Tensor::randn({5}, rng)) < 1e-4);

      std::vector<std::vector<size_t>> masked = {{1, 2}, {0, 3}};
      Tensor target = Tensor::randn({2, 4, 3}, rng);
      auto fm = [&](Tape& t, const Tensor& recon) {
        return t.mse_masked(recon, target, masked);
      };
      CHECK(grad_check(fm, Tensor::randn({2, 4, 3}, rng)) < 1e-4);
    }
  }
}

TEST_CASE("backward on unused branches is a no-op") {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor used = tape.sum(x);
  Tensor unused = tape.mul(x, x);  // never feeds the loss
  (void)unused;
  tape.backward(used);
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[1] == doctest::Approx(1.0));
}

TEST_CASE("checkpoint of a recorded tape is not needed for eval tapes") {
  // Non-recording tapes produce no nodes and no grads.
  Rng rng(9);
  Tensor x = Tensor::randn({3, 3}, rng, 1.0, true);
  Tape tape(false);
  Tensor y = tape.matmul(x, x);
  CHECK(tape.num_nodes() == 0);
  CHECK_FALSE(y.requires_grad());
}
