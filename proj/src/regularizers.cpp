#include "dcond/regularizers.hpp"

#include "dcond/error.hpp"

#include <cmath>
#include <limits>

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(RegularizerId id) {
  switch (id) {
    case RegularizerId::intra: return "intra";
    case RegularizerId::inter: return "inter";
    case RegularizerId::rep: return "rep";
    case RegularizerId::div: return "div";
    case RegularizerId::con: return "con";
    case RegularizerId::cos: return "cos";
    case RegularizerId::dis: return "dis";
    case RegularizerId::proj: return "proj";
  }
  return "?";
}

RegularizerId parse_regularizer(const std::string& s) {
  for (auto id : {RegularizerId::intra, RegularizerId::inter, RegularizerId::rep, RegularizerId::div,
                  RegularizerId::con, RegularizerId::cos, RegularizerId::dis, RegularizerId::proj})
    if (to_string(id) == s) return id;
  fail(ErrorKind::config, "unknown regularizer '" + s + "'");
}

void validate(const RegularizerTerm& term) {
  require(std::isfinite(term.weight) && term.weight >= 0.0, ErrorKind::config,
          "regularizer weight must be >= 0");
  require(std::isfinite(term.tau) && term.tau > 0.0, ErrorKind::config,
          "regularizer tau must be > 0 (" + to_string(term.id) + ")");
}

double cosine_similarity(const VectorXd& a, const VectorXd& b) {
  return a.dot(b) / (std::max(a.norm(), 1e-12) * std::max(b.norm(), 1e-12));
}

VectorXd project_onto_span(const VectorXd& theta, const std::vector<VectorXd>& snapshots) {
  require(!snapshots.empty(), ErrorKind::context, "projection needs at least one snapshot");
  MatrixXd a(theta.size(), static_cast<Index>(snapshots.size()));
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    require(snapshots[k].size() == theta.size(), ErrorKind::shape, "snapshot size mismatch");
    a.col(static_cast<Index>(k)) = snapshots[k];
  }
  return a * a.colPivHouseholderQr().solve(theta);
}

namespace {

double log_sum_exp(const VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

void need(bool ok, RegularizerId id, const std::string& what) {
  require(ok, ErrorKind::context, "regularizer " + to_string(id) + " needs " + what);
}

std::vector<std::vector<Index>> rows_by_class(const Labels& labels, int classes) {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  return out;
}

double intra(const RegularizerTerm& term, const RegularizerContext& ctx) {
  const Mlp& h = ctx.models->front();
  const MatrixXd emb = h.embedding(*ctx.s);
  const auto groups = rows_by_class(*ctx.s_labels, ctx.class_count);
  double total = 0.0;
  for (int y = 0; y < ctx.class_count; ++y) {
    const auto& g = groups[y];
    if (g.empty()) continue;
    MatrixXd ty = ctx.t->class_rows(y);
    require(ty.rows() > 0, ErrorKind::context, "intra needs real samples of every synthetic class");
    const VectorXd centre = h.embedding(ty).colwise().mean().transpose();
    for (Index i : g) {
      VectorXd logits(static_cast<Index>(g.size()));
      logits(0) = emb.row(i).dot(centre) / term.tau;
      Index at = 1;
      for (Index j : g)
        if (j != i) logits(at++) = emb.row(i).dot(emb.row(j)) / term.tau;
      total += log_sum_exp(logits) - logits(0);
    }
  }
  return total / static_cast<double>(ctx.s->rows());
}

double inter(const RegularizerTerm& term, const RegularizerContext& ctx) {
  const MatrixXd emb = ctx.models->front().embedding(*ctx.s);
  const auto groups = rows_by_class(*ctx.s_labels, ctx.class_count);
  std::vector<VectorXd> means;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    VectorXd m = VectorXd::Zero(emb.cols());
    for (Index i : g) m += emb.row(i).transpose();
    means.push_back(m / static_cast<double>(g.size()));
  }
  double total = 0.0;
  for (std::size_t a = 0; a < means.size(); ++a)
    for (std::size_t b = 0; b < means.size(); ++b)
      if (a != b) total += std::max(0.0, term.tau - (means[a] - means[b]).norm());
  return total;
}

double rep(const RegularizerContext& ctx) {
  const MatrixXd& s = *ctx.s;
  const MatrixXd& t = ctx.t->features();
  double total = 0.0;
  for (Index i = 0; i < s.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < t.rows(); ++j) best = std::max(best, cosine_similarity(s.row(i), t.row(j)));
    total -= best;
  }
  return total / static_cast<double>(s.rows());
}

double div(const RegularizerContext& ctx) {
  const MatrixXd& s = *ctx.s;
  if (s.rows() < 2) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < s.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < s.rows(); ++j)
      if (j != i) best = std::max(best, cosine_similarity(s.row(i), s.row(j)));
    total += best;
  }
  return total / static_cast<double>(s.rows());
}

double con_or_cos(const RegularizerTerm& term, const RegularizerContext& ctx) {
  const auto& models = *ctx.models;
  std::vector<MatrixXd> emb;
  for (const auto& m : models) {
    emb.push_back(m.embedding(*ctx.s));
    require(emb.back().cols() == emb.front().cols(), ErrorKind::shape,
            "models disagree on the embedding width");
  }
  const double h2 = static_cast<double>(models.size() * models.size());
  const auto groups = rows_by_class(*ctx.s_labels, ctx.class_count);
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    double sum = 0.0;
    for (std::size_t j = 0; j < models.size(); ++j)
      for (std::size_t k = 0; k < models.size(); ++k) {
        if (j == k) continue;
        for (Index i : g) {
          if (term.id == RegularizerId::cos) {
            sum += cosine_similarity(emb[j].row(i), emb[k].row(i));
            continue;
          }
          VectorXd logits(static_cast<Index>(g.size()));
          Index self = 0;
          for (std::size_t u = 0; u < g.size(); ++u) {
            logits(static_cast<Index>(u)) = emb[j].row(i).dot(emb[k].row(g[u])) / term.tau;
            if (g[u] == i) self = static_cast<Index>(u);
          }
          sum -= logits(self) - log_sum_exp(logits);
        }
      }
    total += sum / (h2 * static_cast<double>(g.size()));
  }
  return total;
}

double dis(const RegularizerContext& ctx) {
  const Mlp& h = ctx.models->front();
  const MatrixXd emb = h.embedding(*ctx.s);
  const auto groups = rows_by_class(*ctx.s_labels, ctx.class_count);
  MatrixXd protos(ctx.class_count, emb.cols());
  for (int y = 0; y < ctx.class_count; ++y) {
    require(!groups[y].empty(), ErrorKind::context, "dis needs synthetic samples in every class");
    protos.row(y).setZero();
    for (Index i : groups[y]) protos.row(y) += emb.row(i);
    protos.row(y) /= static_cast<double>(groups[y].size());
  }
  double total = 0.0;
  int used = 0;
  for (int y = 0; y < ctx.class_count; ++y) {
    const MatrixXd ty = ctx.t->class_rows(y);
    if (ty.rows() == 0) continue;
    const MatrixXd scores = h.embedding(ty) * protos.transpose();
    double sum = 0.0;
    for (Index i = 0; i < scores.rows(); ++i) sum += log_sum_exp(scores.row(i).transpose()) - scores(i, y);
    total += sum / static_cast<double>(ty.rows());
    ++used;
  }
  require(used > 0, ErrorKind::context, "dis needs real samples");
  return total / used;
}

double proj(const RegularizerContext& ctx) {
  return (*ctx.theta - project_onto_span(*ctx.theta, ctx.trajectory->snapshots)).lpNorm<1>();
}

void check_context(const RegularizerTerm& term, const RegularizerContext& ctx) {
  const RegularizerId id = term.id;
  if (id == RegularizerId::proj) {
    need(ctx.theta != nullptr, id, "model parameters");
    need(ctx.trajectory != nullptr && !ctx.trajectory->snapshots.empty(), id, "a trajectory");
    return;
  }
  need(ctx.s != nullptr && ctx.s->rows() > 0, id, "synthetic samples");
  const bool uses_models = id != RegularizerId::rep && id != RegularizerId::div;
  if (uses_models) {
    need(ctx.s_labels != nullptr && ctx.s_labels->size() == static_cast<std::size_t>(ctx.s->rows()), id,
         "synthetic labels");
    need(ctx.class_count >= 1, id, "a class count");
    need(ctx.models != nullptr && !ctx.models->empty(), id, "a model");
  }
  if (id == RegularizerId::con || id == RegularizerId::cos)
    need(ctx.models->size() >= 2, id, "at least two models");
  if (id == RegularizerId::intra || id == RegularizerId::rep || id == RegularizerId::dis)
    need(ctx.t != nullptr, id, "the real dataset");
}

}  // namespace

double regularizer_eval(const RegularizerTerm& term, const RegularizerContext& ctx) {
  validate(term);
  check_context(term, ctx);
  switch (term.id) {
    case RegularizerId::intra: return intra(term, ctx);
    case RegularizerId::inter: return inter(term, ctx);
    case RegularizerId::rep: return rep(ctx);
    case RegularizerId::div: return div(ctx);
    case RegularizerId::con:
    case RegularizerId::cos: return con_or_cos(term, ctx);
    case RegularizerId::dis: return dis(ctx);
    case RegularizerId::proj: return proj(ctx);
  }
  return 0.0;
}

MatrixXd regularizer_gradient(const RegularizerTerm& term, const RegularizerContext& ctx, double step) {
  check_context(term, ctx);
  if (term.id == RegularizerId::proj) {
    require(ctx.s != nullptr, ErrorKind::context, "gradient needs synthetic samples");
    return MatrixXd::Zero(ctx.s->rows(), ctx.s->cols());  // constant in S
  }
  MatrixXd s = *ctx.s;
  MatrixXd g(s.rows(), s.cols());
  RegularizerContext local = ctx;
  local.s = &s;
  for (Index j = 0; j < s.cols(); ++j)
    for (Index i = 0; i < s.rows(); ++i) {
      const double keep = s(i, j);
      s(i, j) = keep + step;
      const double up = regularizer_eval(term, local);
      s(i, j) = keep - step;
      const double down = regularizer_eval(term, local);
      s(i, j) = keep;
      g(i, j) = (up - down) / (2.0 * step);
    }
  return g;
}

}  // namespace dcond
