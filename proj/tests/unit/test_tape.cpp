#include <doctest.h>

#include "sdfrecon/tape.hpp"
#include "sdfrecon/util.hpp"

#include <functional>

using namespace sdfrecon;

namespace {

using Mat = Eigen::MatrixXd;
using TapeD = Tape<double>;
using Ref = TapeD::Ref;

Mat random_mat(int r, int c, RngStream& rng, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Central-difference audit of d(loss)/d(every leaf entry).
void fd_check(const std::vector<Mat>& leaves,
              const std::function<Ref(TapeD&, const std::vector<Ref>&)>& build,
              double tol = 5e-7, double h = 1e-6) {
  auto eval = [&](const std::vector<Mat>& vals) {
    TapeD tape;
    std::vector<Ref> refs;
    for (const auto& v : vals) refs.push_back(tape.leaf(v, true));
    return tape.value(build(tape, refs))(0, 0);
  };

  TapeD tape;
  std::vector<Ref> refs;
  for (const auto& v : leaves) refs.push_back(tape.leaf(v, true));
  Ref loss = build(tape, refs);
  tape.backward(loss);

  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Mat grad = tape.gradient(refs[l]);
    for (int i = 0; i < leaves[l].rows(); ++i)
      for (int j = 0; j < leaves[l].cols(); ++j) {
        std::vector<Mat> pert = leaves;
        pert[l](i, j) += h;
        double up = eval(pert);
        pert[l](i, j) -= 2 * h;
        double dn = eval(pert);
        double fd = (up - dn) / (2 * h);
        double err = std::abs(grad(i, j) - fd) / std::max({1.0, std::abs(fd)});
        INFO("leaf ", l, " entry (", i, ",", j, "): analytic ", grad(i, j), " fd ", fd);
        CHECK(err < tol);
      }
  }
}

// Fixed pseudo-random weighting so repeated builds see the same functional.
Ref weighted_sum(TapeD& t, Ref node, uint64_t salt = 0) {
  const auto& v = t.value(node);
  RngStream rng(0xC0FFEE ^ salt ^ (uint64_t(v.rows()) << 32) ^ uint64_t(v.cols()));
  return t.sum(t.cwise_mul(node, t.constant(random_mat(int(v.rows()), int(v.cols()), rng))));
}

}  // namespace

TEST_CASE("tape: trivial gradients") {
  TapeD tape;
  Mat v = Mat::Ones(3, 2);
  auto leaf = tape.leaf(v, true);
  auto loss = tape.sum(leaf);
  tape.backward(loss);
  CHECK((tape.gradient(leaf) - Mat::Ones(3, 2)).cwiseAbs().maxCoeff() == 0.0);

  TapeD t2;
  auto c = t2.constant(Mat::Ones(2, 2));
  auto p = t2.leaf(Mat::Ones(2, 2), true);
  auto loss2 = t2.sum(t2.add(p, c));
  t2.backward(loss2);
  CHECK((t2.gradient(c)).cwiseAbs().maxCoeff() == 0.0);  // constants stay zero
}

TEST_CASE("tape: backward misuse throws") {
  TapeD tape;
  auto leaf = tape.leaf(Mat::Ones(2, 2), true);
  CHECK_THROWS_AS(tape.gradient(leaf), std::logic_error);              // before backward
  CHECK_THROWS_AS(tape.backward(leaf), std::invalid_argument);          // non-scalar seed
  auto c = tape.constant(Mat::Ones(1, 1));
  CHECK_THROWS_AS(tape.backward(c), std::logic_error);                  // no differentiable leaf
}

TEST_CASE("tape: finite-difference audit of every primitive") {
  RngStream rng(2024);

  SUBCASE("affine") {
    fd_check({random_mat(4, 3, rng), random_mat(3, 5, rng), random_mat(4, 1, rng)},
             [&](TapeD& t, const std::vector<Ref>& l) {
               return weighted_sum(t, t.affine(l[0], l[1], l[2]));
             });
  }
  SUBCASE("matmul") {
    fd_check({random_mat(4, 3, rng), random_mat(3, 5, rng)},
             [&](TapeD& t, const std::vector<Ref>& l) {
               return weighted_sum(t, t.matmul(l[0], l[1]));
             });
  }
  SUBCASE("add sub mul div") {
    fd_check({random_mat(3, 4, rng), random_mat(3, 4, rng).array().abs().matrix() +
                                          Mat::Constant(3, 4, 0.5)},
             [&](TapeD& t, const std::vector<Ref>& l) {
               auto s = t.add(t.sub(t.add(l[0], l[1]), t.cwise_mul(l[0], l[1])),
                              t.cwise_div(l[0], l[1]));
               return weighted_sum(t, s);
             });
  }
  SUBCASE("scale add_scalar") {
    fd_check({random_mat(2, 3, rng)}, [&](TapeD& t, const std::vector<Ref>& l) {
      return weighted_sum(t, t.add_scalar(t.scale(l[0], -1.7), 0.3));
    });
  }
  SUBCASE("unary smooth ops") {
    fd_check({random_mat(3, 3, rng, 0.8)}, [&](TapeD& t, const std::vector<Ref>& l) {
      auto a = t.sigmoid(l[0]);
      auto b = t.tanh(l[0]);
      auto c = t.sin(l[0]);
      auto d = t.cos(l[0]);
      auto e = t.softplus(l[0]);
      auto sq = t.square(l[0]);
      auto s = t.add(t.add(t.add(a, b), t.add(c, d)), t.add(e, sq));
      return weighted_sum(t, s);
    });
  }
  SUBCASE("sqrt on positive input") {
    fd_check({(random_mat(3, 3, rng).array().abs() + 0.3).matrix()},
             [&](TapeD& t, const std::vector<Ref>& l) {
               return weighted_sum(t, t.sqrt(l[0]));
             });
  }
  SUBCASE("relu and abs away from the kink") {
    Mat v = random_mat(4, 4, rng);
    for (int i = 0; i < v.size(); ++i)
      if (std::abs(v.data()[i]) < 0.1) v.data()[i] = 0.5;  // keep FD off the kink
    fd_check({v}, [&](TapeD& t, const std::vector<Ref>& l) {
      return weighted_sum(t, t.add(t.relu(l[0]), t.abs(l[0])));
    });
  }
  SUBCASE("shape ops") {
    fd_check({random_mat(3, 4, rng), random_mat(2, 4, rng)},
             [&](TapeD& t, const std::vector<Ref>& l) {
               auto cat = t.concat_rows(l[0], l[1]);   // 5x4
               auto sl = t.slice_rows(cat, 1, 3);      // 3x4
               auto g = t.gather_cols(sl, {3, 0, 0, 2});
               return weighted_sum(t, g);
             });
  }
  SUBCASE("broadcast and reductions") {
    fd_check({random_mat(1, 5, rng), random_mat(4, 1, rng), random_mat(4, 5, rng)},
             [&](TapeD& t, const std::vector<Ref>& l) {
               auto br = t.broadcast_rows(l[0], 4);
               auto bc = t.broadcast_cols(l[1], 5);
               auto prod = t.cwise_mul(t.cwise_mul(br, bc), l[2]);
               auto red = t.add(t.colsum(prod), t.colmean(prod));
               return weighted_sum(t, red);
             });
  }
  SUBCASE("layernorm") {
    fd_check({random_mat(6, 4, rng), random_mat(6, 1, rng), random_mat(6, 1, rng)},
             [&](TapeD& t, const std::vector<Ref>& l) {
               return weighted_sum(t, t.layernorm(l[0], l[1], l[2], 1e-5));
             },
             2e-6);
  }
  SUBCASE("positional encoding") {
    fd_check({random_mat(3, 4, rng)}, [&](TapeD& t, const std::vector<Ref>& l) {
      return weighted_sum(t, t.posenc(l[0], 4));
    });
  }
}

TEST_CASE("tape: subgradient conventions at kinks") {
  TapeD tape;
  Mat z = Mat::Zero(1, 1);
  auto leaf = tape.leaf(z, true);
  auto loss = tape.sum(tape.add(tape.relu(leaf), tape.abs(leaf)));
  tape.backward(loss);
  CHECK(tape.gradient(leaf)(0, 0) == 0.0);
}

TEST_CASE("tape: posenc layout") {
  TapeD tape;
  Mat x(3, 1);
  x << 0.0, 0.0, 0.0;
  auto enc = tape.posenc(tape.constant(x), 2);
  const Mat& v = tape.value(enc);
  REQUIRE(v.rows() == 15);
  for (int blk = 0; blk < 3; ++blk) {
    CHECK(v(blk * 5 + 0, 0) == 0.0);
    CHECK(v(blk * 5 + 1, 0) == 1.0);  // cos 0
    CHECK(v(blk * 5 + 2, 0) == 0.0);  // sin 0
    CHECK(v(blk * 5 + 3, 0) == 1.0);
    CHECK(v(blk * 5 + 4, 0) == 0.0);
  }

  TapeD t0;
  Mat y(3, 2);
  y << 0.3, -1.2, 0.8, 0.4, -0.5, 2.0;
  auto e0 = t0.posenc(t0.constant(y), 0);
  CHECK((t0.value(e0) - y).cwiseAbs().maxCoeff() == 0.0);  // L = 0 passes through
}
