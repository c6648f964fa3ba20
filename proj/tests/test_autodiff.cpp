#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "grid/autodiff.hpp"

using grid::ad::Mat;
using grid::ad::Tape;

namespace {

// Inputs stay away from 0 so kinked ops (relu family, |x|) are smooth at every
// probed point and central differences are trustworthy.
Mat<double> random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::uniform_real_distribution<double> mag(0.25, 1.25);
  std::bernoulli_distribution sign(0.5);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return m;
}

// Builds the graph over leaves, reduces the op output to a scalar through a fixed
// random weighting, and compares every analytic input gradient against central
// finite differences of the whole scalar function.
void check_gradients(std::vector<Mat<double>> inputs,
                     const std::function<int(Tape<double>&, const std::vector<int>&)>& build,
                     double tol = 5e-7) {
  std::mt19937_64 rng(0xfeedbeef);

  auto eval = [&](const std::vector<Mat<double>>& ins, Mat<double>* weight_out,
                  std::vector<Mat<double>>* grads) {
    Tape<double> tape;
    std::vector<int> ids;
    for (const auto& m : ins) ids.push_back(tape.leaf(m));
    int out = build(tape, ids);
    if (weight_out->size() == 0) {
      std::mt19937_64 wrng(0x5eed);
      *weight_out = random_matrix(wrng, tape.val(out).rows(), tape.val(out).cols());
    }
    int w = tape.leaf(*weight_out);
    int scalar = tape.sum_all(tape.hadamard(out, w));
    double y = tape.val(scalar)(0, 0);
    if (grads) {
      tape.backward(scalar);
      grads->clear();
      for (int id : ids) grads->push_back(tape.grad(id));
    }
    return y;
  };

  Mat<double> weights;
  std::vector<Mat<double>> analytic;
  eval(inputs, &weights, &analytic);

  const double eps = 1e-6;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    for (Eigen::Index i = 0; i < inputs[which].rows(); ++i) {
      for (Eigen::Index j = 0; j < inputs[which].cols(); ++j) {
        std::vector<Mat<double>> plus = inputs, minus = inputs;
        plus[which](i, j) += eps;
        minus[which](i, j) -= eps;
        double fd = (eval(plus, &weights, nullptr) - eval(minus, &weights, nullptr)) / (2 * eps);
        double an = analytic[which](i, j);
        double denom = std::max({1.0, std::abs(fd), std::abs(an)});
        ASSERT_NEAR(fd / denom, an / denom, tol)
            << "input " << which << " entry (" << i << "," << j << ")";
      }
    }
  }
}

}  // namespace

TEST(Autodiff, MatmulAllTransposeFlags) {
  std::mt19937_64 rng(1);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      Mat<double> A = ta ? random_matrix(rng, 4, 3) : random_matrix(rng, 3, 4);
      Mat<double> B = tb ? random_matrix(rng, 5, 4) : random_matrix(rng, 4, 5);
      check_gradients({A, B}, [ta, tb](Tape<double>& t, const std::vector<int>& ids) {
        return t.matmul(ids[0], ids[1], ta, tb);
      });
    }
  }
}

TEST(Autodiff, ElementwiseAndBroadcast) {
  std::mt19937_64 rng(2);
  check_gradients({random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.add(ids[0], ids[1]);
                  });
  check_gradients({random_matrix(rng, 3, 4), random_matrix(rng, 1, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.add_rowvec(ids[0], ids[1]);
                  });
  check_gradients({random_matrix(rng, 1, 5)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.repeat_row(ids[0], 4);
                  });
  check_gradients({random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.scale(ids[0], -2.5);
                  });
  check_gradients({random_matrix(rng, 3, 4), random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.hadamard(ids[0], ids[1]);
                  });
  check_gradients({random_matrix(rng, 3, 4), random_matrix(rng, 3, 1)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.row_scale(ids[0], ids[1]);
                  });
}

TEST(Autodiff, ShapeOps) {
  std::mt19937_64 rng(3);
  check_gradients({random_matrix(rng, 2, 4), random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.concat_rows({ids[0], ids[1], ids[0]});
                  });
  check_gradients({random_matrix(rng, 3, 2), random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.concat_cols({ids[0], ids[1]});
                  });
  check_gradients({random_matrix(rng, 5, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.slice_rows(ids[0], 1, 3);
                  });
  check_gradients({random_matrix(rng, 4, 6)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.slice_cols(ids[0], 2, 3);
                  });
  check_gradients({random_matrix(rng, 4, 3)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.gather_rows(ids[0], {2, 0, 2, 3});  // duplicate index
                  });
  check_gradients({random_matrix(rng, 4, 3)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.scatter_add_rows(ids[0], {1, 0, 1, 4}, 5);  // collisions add
                  });
  check_gradients({random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.pad_rows(ids[0], 6);
                  });
  check_gradients({random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.reshape_row(ids[0]);
                  });
}

TEST(Autodiff, Nonlinearities) {
  std::mt19937_64 rng(4);
  check_gradients({random_matrix(rng, 3, 5)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.relu(ids[0]);
                  });
  check_gradients({random_matrix(rng, 3, 5)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.leaky_relu(ids[0], 0.2);
                  });
  check_gradients({random_matrix(rng, 3, 5)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.elu(ids[0]);
                  });
}

TEST(Autodiff, SoftmaxFamily) {
  std::mt19937_64 rng(5);
  check_gradients({random_matrix(rng, 3, 6)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.row_softmax(ids[0]);
                  });
  check_gradients({random_matrix(rng, 6, 1)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.segment_softmax(ids[0], {{0, 2, 4}, {1, 3}, {5}});
                  });

  // Probabilities must sum to one per row / per segment.
  Tape<double> tape;
  int a = tape.leaf(random_matrix(rng, 4, 7));
  int sm = tape.row_softmax(a);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(tape.val(sm).row(i).sum(), 1.0, 1e-12);

  int s = tape.leaf(random_matrix(rng, 5, 1));
  int seg = tape.segment_softmax(s, {{0, 3}, {1, 2, 4}});
  EXPECT_NEAR(tape.val(seg)(0, 0) + tape.val(seg)(3, 0), 1.0, 1e-12);
  EXPECT_NEAR(tape.val(seg)(1, 0) + tape.val(seg)(2, 0) + tape.val(seg)(4, 0), 1.0, 1e-12);
}

TEST(Autodiff, Reductions) {
  std::mt19937_64 rng(6);
  check_gradients({random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.sum_all(ids[0]);
                  });
  check_gradients({random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.l1_norm(ids[0]);
                  });
  check_gradients({random_matrix(rng, 3, 4)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.sum_squares(ids[0]);
                  });
}

TEST(Autodiff, LayerNorm) {
  std::mt19937_64 rng(7);
  check_gradients({random_matrix(rng, 4, 6), random_matrix(rng, 1, 6),
                   random_matrix(rng, 1, 6)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.layer_norm(ids[0], ids[1], ids[2]);
                  });

  // With identity affine the rows are standardized.
  Tape<double> tape;
  int x = tape.leaf(random_matrix(rng, 3, 8));
  int g = tape.leaf(Mat<double>::Ones(1, 8));
  int b = tape.leaf(Mat<double>::Zero(1, 8));
  int y = tape.layer_norm(x, g, b, 0.0);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(tape.val(y).row(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR(tape.val(y).row(i).array().square().mean(), 1.0, 1e-10);
  }
}

TEST(Autodiff, CrossEntropy) {
  std::mt19937_64 rng(8);
  check_gradients({random_matrix(rng, 1, 8)},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    return t.cross_entropy_logits(ids[0], 3);
                  });

  // Value agrees with the naive -log softmax.
  Tape<double> tape;
  Mat<double> logits = random_matrix(rng, 1, 5);
  int l = tape.leaf(logits);
  int ce = tape.cross_entropy_logits(l, 2);
  Eigen::ArrayXd p = (logits.row(0).array() - logits.maxCoeff()).exp();
  double naive = -std::log(p(2) / p.sum());
  EXPECT_NEAR(tape.val(ce)(0, 0), naive, 1e-12);

  // Large logits stay finite.
  Mat<double> big(1, 3);
  big << 1000.0, 999.0, 998.0;
  Tape<double> t2;
  int ce2 = t2.cross_entropy_logits(t2.leaf(big), 0);
  EXPECT_TRUE(std::isfinite(t2.val(ce2)(0, 0)));
}

// A two-layer MLP with layer norm and softmax exercises accumulation through shared
// parameters and deep chains.
TEST(Autodiff, ComposedNetwork) {
  std::mt19937_64 rng(9);
  Mat<double> x = random_matrix(rng, 3, 4);
  Mat<double> w1 = random_matrix(rng, 4, 6);
  Mat<double> b1 = random_matrix(rng, 1, 6);
  Mat<double> w2 = random_matrix(rng, 6, 5);
  Mat<double> gamma = random_matrix(rng, 1, 5);
  Mat<double> beta = random_matrix(rng, 1, 5);

  check_gradients({x, w1, b1, w2, gamma, beta},
                  [](Tape<double>& t, const std::vector<int>& ids) {
                    int h = t.relu(t.add_rowvec(t.matmul(ids[0], ids[1]), ids[2]));
                    int z = t.matmul(h, ids[3]);
                    int n = t.layer_norm(z, ids[4], ids[5]);
                    // Reuse w2 through a second path to test gradient accumulation.
                    int z2 = t.matmul(t.row_softmax(n), ids[3], false, true);
                    return t.concat_cols({n, z2});
                  },
                  2e-6);
}

TEST(Autodiff, FloatInstantiation) {
  Tape<float> tape;
  Mat<float> a(2, 3), b(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  b << 1, 0, 0, 1, 1, 1;
  int ida = tape.leaf(a);
  int idb = tape.leaf(b);
  int out = tape.matmul(ida, idb);
  EXPECT_FLOAT_EQ(tape.val(out)(0, 0), 4.0f);
  int s = tape.sum_all(tape.row_softmax(out));
  tape.backward(s);
  EXPECT_EQ(tape.grad(ida).rows(), 2);
}
