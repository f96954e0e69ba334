#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "grembed/error.hpp"
#include "grembed/fixtures.hpp"
#include "grembed/gnn.hpp"

using namespace grembed;
using diff::Tape;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -scale, scale);
  return m;
}

double max_row_norm(const Matrix& m) { return m.rowwise().norm().maxCoeff(); }

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("zero transition map reaches the zero fixed point") {
  const Graph g = fixtures::cycle(6);
  FixedPointGnn m = make_fixed_point_gnn({.attribute_dim = 2, .state_dim = 3});
  for (auto* p : m.transition.parameters()) p->value.setZero();
  Rng rng(1);
  const Matrix x = random_matrix(2, 6, rng);
  const Matrix h0 = random_matrix(6, 3, rng);
  CHECK(fixed_point_step(m, g, x.transpose(), h0).isZero(0.0));
  const FixedPointResult r = gnn_fixed_point(g, x, m, &h0);
  CHECK(r.state.isZero(0.0));
  CHECK(r.iterations == 2);
  CHECK(r.residuals[1] == 0.0);
}

TEST_CASE("fixed-point GNN is a contraction with a unique fixed point") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    const Graph g = fixtures::random_connected(6, 4, seed);
    Rng rng(seed + 100);
    const Matrix x = random_matrix(2, 6, rng);
    FixedPointGnn m = make_fixed_point_gnn({.attribute_dim = 2, .state_dim = 4, .hidden = 8, .tol = 1e-9, .seed = seed});
    // freshly initialized weights are far from contractive on these graphs
    CHECK(contraction_bound(m, g) > 0.9);
    enforce_contraction(m, g);
    CHECK(contraction_bound(m, g) <= 0.9 * (1 + 1e-12));

    // empirical Lipschitz ratio never exceeds the bound
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix a = random_matrix(6, 4, rng, 3.0), b = random_matrix(6, 4, rng, 3.0);
      const double ratio = max_row_norm(fixed_point_step(m, g, x.transpose(), a) - fixed_point_step(m, g, x.transpose(), b)) /
                           max_row_norm(a - b);
      CHECK(ratio <= 0.9 + 1e-12);
    }

    const Matrix a0 = random_matrix(6, 4, rng, 5.0), b0 = random_matrix(6, 4, rng, 5.0);
    const FixedPointResult ra = gnn_fixed_point(g, x, m, &a0);
    const FixedPointResult rb = gnn_fixed_point(g, x, m, &b0);
    CHECK((ra.state - rb.state).cwiseAbs().maxCoeff() < 10 * 1e-9);
    for (std::size_t k = 2; k < ra.residuals.size(); ++k) CHECK(ra.residuals[k] <= ra.residuals[k - 1]);
    CHECK(ra.table.dim() == 4);
  }
}

TEST_CASE("fixed-point readout and errors") {
  const Graph g = fixtures::petersen();
  FixedPointGnn m = make_fixed_point_gnn({.state_dim = 3, .output_dim = 2, .seed = 5});
  const FixedPointResult r = gnn_fixed_point(g, Matrix(0, 10), m);
  CHECK(r.table.dim() == 2);
  CHECK((r.table.z.transpose() - m.readout.evaluate(r.state)).cwiseAbs().maxCoeff() == 0.0);

  FixedPointGnn slow = make_fixed_point_gnn({.state_dim = 3, .tol = 1e-15, .max_iters = 2, .seed = 5});
  CHECK_THROWS_AS(gnn_fixed_point(g, Matrix(0, 10), slow), ConvergenceError);
  CHECK_THROWS_AS(make_fixed_point_gnn({.contraction_scale = 1.0}), ContractError);
  CHECK_THROWS_AS(make_fixed_point_gnn({.tol = 0.0}), ContractError);
}

TEST_CASE("gated GNN basics") {
  const Graph g = fixtures::star(4);
  Rng rng(2);
  const Matrix x = random_matrix(2, 5, rng);
  GgnnParams p = make_ggnn(3, 7);
  Matrix padded = Matrix::Zero(3, 5);
  padded.topRows(2) = x;
  CHECK(ggnn_forward(g, x, 0, p).z == padded);

  p.message.value.setZero();
  p.gru.bz.value.setConstant(60.0);
  CHECK((ggnn_forward(g, x, 5, p).z - padded).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(ggnn_forward(g, Matrix::Zero(4, 5), 1, p), ShapeError);
}

TEST_CASE("gated GNN matches a scalar GRU recurrence") {
  const Graph g = fixtures::path(2);
  GgnnParams p = make_ggnn(1, 3);
  const double w = p.message.value(0, 0);
  const double wz = p.gru.wz.value(0, 0), uz = p.gru.uz.value(0, 0), bz = p.gru.bz.value(0, 0);
  const double wr = p.gru.wr.value(0, 0), ur = p.gru.ur.value(0, 0), br = p.gru.br.value(0, 0);
  const double wh = p.gru.wh.value(0, 0), uh = p.gru.uh.value(0, 0), bh = p.gru.bh.value(0, 0);
  double h[2] = {0.8, -0.3};
  Matrix x(1, 2);
  x << h[0], h[1];
  for (int round = 0; round < 3; ++round) {
    const double m[2] = {w * h[1], w * h[0]};
    double next[2];
    for (int i = 0; i < 2; ++i) {
      const double z = sig(wz * m[i] + uz * h[i] + bz);
      const double r = sig(wr * m[i] + ur * h[i] + br);
      const double c = std::tanh(wh * m[i] + uh * (r * h[i]) + bh);
      next[i] = z * h[i] + (1 - z) * c;
    }
    h[0] = next[0];
    h[1] = next[1];
  }
  const Matrix z = ggnn_forward(g, x, 3, p).z;
  CHECK(std::abs(z(0, 0) - h[0]) < 1e-14);
  CHECK(std::abs(z(0, 1) - h[1]) < 1e-14);
}

TEST_CASE("gated GNN states stay bounded") {
  const Graph g = fixtures::karate_club();
  Rng rng(4);
  const Matrix x = random_matrix(4, 34, rng);
  CHECK(ggnn_forward(g, x, 50, make_ggnn(8, 1)).z.cwiseAbs().maxCoeff() < 1e3);
}

TEST_CASE("MPNN with a linear message and GRU update is the gated GNN") {
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Graph g = fixtures::random_connected(8, 6, seed);
    const Matrix x = random_matrix(3, 8, rng);
    const Mpnn m({.input_dim = 3, .state_dim = 5, .message_dim = 5, .rounds = 3, .message = MessageKind::linear,
                  .update = UpdateKind::gru, .seed = seed});
    CHECK(mpnn_forward(g, x, m).z == ggnn_forward(g, x, 3, make_ggnn(5, seed)).z);
  }
}

TEST_CASE("zero messages decouple the nodes") {
  const Graph g = fixtures::random_connected(7, 5, 1);
  GraphBuilder b;
  b.add_nodes(7);
  const Graph isolated = b.build();
  Rng rng(6);
  const Matrix x = random_matrix(2, 7, rng);
  for (auto update : {UpdateKind::gru, UpdateKind::mlp}) {
    Mpnn m({.input_dim = 2, .state_dim = 4, .message_dim = 3, .rounds = 3, .update = update});
    for (auto* p : m.mlp_message[0].layers.back().parameters()) p->value.setZero();
    CHECK(m.encode(g, x) == m.encode(isolated, x));
  }
}

TEST_CASE("MPNN is permutation equivariant") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Graph g = fixtures::random_connected(8, 5, static_cast<std::uint64_t>(trial));
    std::vector<NodeIndex> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    const Graph h = fixtures::permute(g, perm);
    const Matrix x = random_matrix(2, 8, rng);
    Matrix xp(2, 8);
    for (NodeIndex v = 0; v < 8; ++v) xp.col(perm[v]) = x.col(v);
    for (auto message : {MessageKind::linear, MessageKind::mlp})
      for (auto update : {UpdateKind::gru, UpdateKind::mlp}) {
        const Mpnn m({.input_dim = 2, .state_dim = 4, .message_dim = 3, .rounds = 3, .message = message,
                      .update = update, .output_dim = 2});
        const Matrix a = m.encode(g, x), b = m.encode(h, xp);
        for (NodeIndex v = 0; v < 8; ++v) CHECK((b.col(perm[v]) - a.col(v)).cwiseAbs().maxCoeff() < 1e-9);
      }
  }
}

TEST_CASE("MPNN gradients") {
  Rng rng(8);
  for (int rounds = 1; rounds <= 3; ++rounds)
    for (auto message : {MessageKind::linear, MessageKind::mlp})
      for (auto update : {UpdateKind::gru, UpdateKind::mlp}) {
        const Graph g = fixtures::random_connected(6, 3, static_cast<std::uint64_t>(rounds));
        const Matrix x = random_matrix(6, 2, rng);
        Mpnn m({.input_dim = 2, .state_dim = 3, .message_dim = 2, .rounds = rounds, .message = message,
                .update = update, .hidden = 4, .output_dim = 2, .seed = static_cast<std::uint64_t>(rounds)});
        const Matrix target = random_matrix(6, 2, rng);
        const double err = grembed::testing::gradient_relative_error(m.parameters(), [&](Tape& t) {
          return diff::reduce_sum(diff::square(m.forward(t, g, t.constant(x)) - t.constant(target)));
        });
        CHECK(err < 1e-5);
      }
}

TEST_CASE("edge-type message maps") {
  GraphBuilder same, mixed;
  const std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}, {2, 3}, {3, 0}, {0, 2}};
  for (std::size_t k = 0; k < edges.size(); ++k) {
    same.add_edge(std::to_string(edges[k].first), std::to_string(edges[k].second), 1.0, 0);
    mixed.add_edge(std::to_string(edges[k].first), std::to_string(edges[k].second), 1.0, static_cast<int>(k % 2));
  }
  const Graph gs = same.build(), gm = mixed.build();
  Rng rng(9);
  const Matrix x = random_matrix(2, 4, rng);
  for (auto message : {MessageKind::linear, MessageKind::mlp}) {
    const MpnnConfig base{.input_dim = 2, .state_dim = 3, .message_dim = 3, .rounds = 2, .message = message};
    const Mpnn shared(base);
    MpnnConfig typed_config = base;
    typed_config.edge_types = 2;
    Mpnn typed(typed_config);
    typed.gru = shared.gru;
    if (message == MessageKind::linear)
      typed.linear_message[0] = shared.linear_message[0];
    else
      typed.mlp_message[0] = shared.mlp_message[0];
    CHECK(typed.encode(gs, x) == shared.encode(gs, x));
    CHECK(typed.encode(gm, x) != typed.encode(gs, x));
    CHECK_THROWS_AS(shared.encode(gm, x), LookupError);
  }
}

TEST_CASE("MPNN checkpoint round trip") {
  const Graph g = fixtures::random_connected(7, 4, 3);
  Rng rng(10);
  const Matrix x = random_matrix(2, 7, rng);
  for (auto message : {MessageKind::linear, MessageKind::mlp})
    for (auto update : {UpdateKind::gru, UpdateKind::mlp}) {
      const Mpnn m({.input_dim = 2, .state_dim = 4, .message_dim = 3, .message = message, .update = update,
                    .edge_types = 2, .output_dim = 2, .seed = 11});
      std::stringstream buf;
      save_mpnn_checkpoint(m, buf);
      const Mpnn back = load_mpnn_checkpoint(buf);
      CHECK(back.encode(g, x) == m.encode(g, x));
    }

  const Mpnn m({.input_dim = 2, .state_dim = 4, .message_dim = 3, .message = MessageKind::linear});
  std::stringstream buf;
  save_mpnn_checkpoint(m, buf);
  std::string text = buf.str();
  text.replace(text.find("state_dim 4"), 11, "state_dim 5");
  std::istringstream wrong(text);
  CHECK_THROWS_AS(load_mpnn_checkpoint(wrong), ShapeError);
  std::istringstream junk("grembed-aggenc 1\n");
  CHECK_THROWS_AS(load_mpnn_checkpoint(junk), ParseError);
}
