#include "dcond/matching.hpp"

#include "dcond/error.hpp"
#include "dcond/privacy.hpp"

namespace dcond {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(MatchMethod m) {
  switch (m) {
    case MatchMethod::dm: return "dm";
    case MatchMethod::gm: return "gm";
    case MatchMethod::mmd: return "mmd";
    case MatchMethod::moment: return "moment";
    case MatchMethod::sam: return "sam";
  }
  return "?";
}

int embedding_layer(const Mlp& m) { return m.hidden_layers() > 0 ? m.hidden_layers() - 1 : 0; }

std::vector<int> attention_layers(const Mlp& m) {
  std::vector<int> out;
  for (int l = 0; l < m.hidden_layers(); ++l) out.push_back(l);
  if (out.empty()) out.push_back(0);
  return out;
}

namespace {

VectorXd col_mean(const MatrixXd& x) { return x.colwise().mean().transpose(); }

VectorXd col_var(const MatrixXd& x) {
  MatrixXd c = x.rowwise() - x.colwise().mean();
  return c.array().square().colwise().mean().matrix().transpose();
}

bool kernel_route(const MatchOptions& o) { return o.method == MatchMethod::mmd || o.feature_embedding; }

std::vector<std::vector<Index>> group_rows(const Labels& labels, int classes) {
  std::vector<std::vector<Index>> rows(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < classes, ErrorKind::label, "synthetic label out of range");
    rows[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
  }
  return rows;
}

MatrixXd gather(const MatrixXd& x, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

}  // namespace

MatchingObjective::MatchingObjective(MatchOptions options, std::vector<Mlp> models, LabeledDataset t,
                                     Rng* noise_rng)
    : options_(std::move(options)), models_(std::move(models)), t_(std::move(t)) {
  const int classes = t_.class_count();
  for (int y = 0; y < classes; ++y) t_blocks_.push_back(t_.class_rows(y));
  auto noise = [&](const auto& v, double sigma) {
    require(sigma == 0.0 || noise_rng != nullptr, ErrorKind::config, "private matching needs a noise stream");
    ++invocations_;
    return sigma == 0.0 ? v : add_gaussian_noise(v, sigma, *noise_rng);
  };

  if (kernel_route(options_)) {
    if (options_.feature_embedding) {
      require(options_.kernel.family == KernelFamily::random_feature, ErrorKind::config,
              "feature-embedding matching needs a random_feature kernel");
      for (int y = 0; y < classes; ++y) {
        VectorXd mu = t_blocks_[y].rows() > 0 ? col_mean(random_feature_map(options_.kernel, t_blocks_[y]))
                                              : VectorXd::Zero(options_.kernel.feature_dim);
        if (options_.merf_sigma) mu = noise(mu, *options_.merf_sigma);
        feature_means_.push_back(std::move(mu));
      }
    } else {
      validate(options_.kernel);
      for (int y = 0; y < classes; ++y)
        kernel_tt_.push_back(t_blocks_[y].rows() > 0
                                 ? gram_matrix(options_.kernel, t_blocks_[y], t_blocks_[y]).mean()
                                 : 0.0);
    }
    return;
  }

  require(!models_.empty(), ErrorKind::config, to_string(options_.method) + " matching needs models");
  for (const auto& m : models_) {
    require(m.input_dim() == t_.dim(), ErrorKind::shape, "model input width does not match the data");
    std::vector<ClassTargets> per_class(static_cast<std::size_t>(classes));
    for (int y = 0; y < classes; ++y) {
      const MatrixXd& ty = t_blocks_[y];
      if (ty.rows() == 0) continue;
      auto& tg = per_class[static_cast<std::size_t>(y)];
      switch (options_.method) {
        case MatchMethod::dm:
        case MatchMethod::moment: {
          MatrixXd h = m.embedding(ty);
          tg.mean = col_mean(h);
          tg.var = col_var(h);
          break;
        }
        case MatchMethod::sam: {
          ForwardPass fp = m.forward(ty);
          for (int l : attention_layers(m)) tg.attention.push_back(col_mean(fp.features[l].array().square()));
          break;
        }
        case MatchMethod::gm: {
          VectorXd g = m.backward(ty, Labels(static_cast<std::size_t>(ty.rows()), y), options_.loss).params;
          if (options_.grad_sigma) {
            // clipping only matters once noise is added; sigma = 0 keeps the plain target
            if (*options_.grad_sigma > 0.0) g = clip_to_norm(g, options_.clip_norm);
            g = noise(g, *options_.grad_sigma);
          }
          tg.grad = std::move(g);
          break;
        }
        case MatchMethod::mmd: break;
      }
    }
    targets_.push_back(std::move(per_class));
  }
}

MatchValue MatchingObjective::evaluate(const MatrixXd& s, const Labels& s_labels) const {
  require(s.rows() == static_cast<Index>(s_labels.size()), ErrorKind::shape, "one label per synthetic row");
  require(s.cols() == t_.dim(), ErrorKind::shape, "synthetic and real widths differ");
  const int classes = t_.class_count();
  auto rows = group_rows(s_labels, classes);
  std::vector<MatrixXd> blocks;
  for (int y = 0; y < classes; ++y) {
    const bool has_s = !rows[y].empty(), has_t = t_blocks_[y].rows() > 0;
    require(has_s == has_t, ErrorKind::empty_class,
            "class " + std::to_string(y) + " is present in only one of T and S");
    blocks.push_back(gather(s, rows[y]));
  }
  if (kernel_route(options_)) return evaluate_kernel(blocks, rows, s.rows(), s.cols());
  MatchValue total;
  total.grad = MatrixXd::Zero(s.rows(), s.cols());
  for (std::size_t m = 0; m < models_.size(); ++m) {
    MatchValue v = evaluate_model(m, blocks, rows, s.rows(), s, s_labels);
    total.value += v.value;
    total.grad += v.grad;
    total.curvature += v.curvature;
  }
  const double k = static_cast<double>(models_.size());
  total.value /= k;
  total.grad /= k;
  total.curvature /= k;
  return total;
}

MatchValue MatchingObjective::evaluate_kernel(const std::vector<MatrixXd>& blocks,
                                              const std::vector<std::vector<Index>>& rows, Index s_rows,
                                              Index dim) const {
  MatchValue out;
  out.grad = MatrixXd::Zero(s_rows, dim);
  const KernelSpec& k = options_.kernel;
  for (std::size_t y = 0; y < blocks.size(); ++y) {
    const MatrixXd& sy = blocks[y];
    if (sy.rows() == 0) continue;
    const double msz = static_cast<double>(sy.rows());
    MatrixXd gy(sy.rows(), dim);
    if (options_.feature_embedding) {
      VectorXd diff = feature_means_[y] - col_mean(random_feature_map(k, sy));
      out.value += diff.squaredNorm();
      MatrixXd seeds = (-2.0 / msz * diff).transpose().replicate(sy.rows(), 1);
      gy = random_feature_vjp(k, sy, seeds);
    } else {
      const MatrixXd& ty = t_blocks_[y];
      const double nsz = static_cast<double>(ty.rows());
      out.value += kernel_tt_[y] - 2.0 * gram_matrix(k, ty, sy).mean() + gram_matrix(k, sy, sy).mean();
      for (Index j = 0; j < sy.rows(); ++j) {
        const VectorXd sj = sy.row(j).transpose();
        gy.row(j) = -2.0 / (nsz * msz) * kernel_grad_first(k, sj, ty).colwise().sum() +
                    2.0 / (msz * msz) * kernel_grad_first(k, sj, sy).colwise().sum();
      }
    }
    for (std::size_t j = 0; j < rows[y].size(); ++j) out.grad.row(rows[y][j]) = gy.row(static_cast<Index>(j));
  }
  return out;
}

MatchValue MatchingObjective::evaluate_model(std::size_t mi, const std::vector<MatrixXd>& blocks,
                                             const std::vector<std::vector<Index>>& rows, Index s_rows,
                                             const MatrixXd& s, const Labels& s_labels) const {
  const Mlp& m = models_[mi];
  const auto& tg = targets_[mi];
  MatchValue out;
  out.grad = MatrixXd::Zero(s_rows, s.cols());

  if (options_.method == MatchMethod::gm) {
    const Index p = m.param_count();
    std::vector<VectorXd> gs(blocks.size());
    VectorXd sum_t = VectorXd::Zero(p), sum_s = VectorXd::Zero(p);
    for (std::size_t y = 0; y < blocks.size(); ++y) {
      if (blocks[y].rows() == 0) continue;
      Labels ly(static_cast<std::size_t>(blocks[y].rows()), static_cast<int>(y));
      gs[y] = m.backward(blocks[y], ly, options_.loss).params;
      sum_t += tg[y].grad;
      sum_s += gs[y];
    }
    const bool contrastive = options_.gradient_mode == GradientMode::contrastive;
    if (contrastive) out.value = (sum_t - sum_s).squaredNorm();
    for (std::size_t y = 0; y < blocks.size(); ++y) {
      if (blocks[y].rows() == 0) continue;
      VectorXd dir = contrastive ? VectorXd(sum_t - sum_s) : VectorXd(tg[y].grad - gs[y]);
      if (!contrastive) out.value += dir.squaredNorm();
      Labels ly(static_cast<std::size_t>(blocks[y].rows()), static_cast<int>(y));
      MatrixXd r = m.input_grad_directional(blocks[y], ly, options_.loss, dir);
      const double msz = static_cast<double>(blocks[y].rows());
      for (std::size_t j = 0; j < rows[y].size(); ++j)
        out.grad.row(rows[y][j]) = -2.0 / msz * r.row(static_cast<Index>(j));
    }
    if (options_.curvature_rho) {
      const double rho = *options_.curvature_rho;
      const MatrixXd& tx = t_.features();
      const Labels& tl = t_.labels();
      auto diff = [&](const VectorXd& theta) {
        Mlp at = m.with_params(theta);
        return VectorXd(at.backward(tx, tl, options_.loss).params - at.backward(s, s_labels, options_.loss).params);
      };
      const VectorXd theta = m.flat_params();
      VectorXd v;
      const double lambda =
          lambda_max_estimate(diff, theta, options_.power_iters, derive_seed(options_.curvature_seed, mi), &v);
      const double h = hvp_step(theta);
      MatrixXd up = m.with_params(theta + h * v).input_grad_directional(s, s_labels, options_.loss, v);
      MatrixXd down = m.with_params(theta - h * v).input_grad_directional(s, s_labels, options_.loss, v);
      out.value += 0.5 * rho * lambda;
      out.grad += 0.5 * rho * (-(up - down) / (2.0 * h * static_cast<double>(s.rows())));
      out.curvature = lambda;
    }
    return out;
  }

  ForwardPass fp = m.forward(s);
  std::vector<MatrixXd> seeds(fp.features.size());
  auto seed_at = [&](int layer) -> MatrixXd& {
    if (seeds[layer].size() == 0) seeds[layer] = MatrixXd::Zero(s_rows, fp.features[layer].cols());
    return seeds[layer];
  };
  for (std::size_t y = 0; y < blocks.size(); ++y) {
    if (blocks[y].rows() == 0) continue;
    const double msz = static_cast<double>(blocks[y].rows());
    if (options_.method == MatchMethod::sam) {
      const auto layers = attention_layers(m);
      for (std::size_t li = 0; li < layers.size(); ++li) {
        const MatrixXd h = gather(fp.features[layers[li]], rows[y]);
        VectorXd diff = tg[y].attention[li] - col_mean(h.array().square());
        out.value += diff.squaredNorm();
        MatrixXd& sd = seed_at(layers[li]);
        for (std::size_t j = 0; j < rows[y].size(); ++j)
          sd.row(rows[y][j]) = (-2.0 / msz * diff.cwiseProduct(2.0 * h.row(static_cast<Index>(j)).transpose())).transpose();
      }
      continue;
    }
    const int e = embedding_layer(m);
    const MatrixXd h = gather(fp.features[e], rows[y]);
    const VectorXd mu = col_mean(h);
    VectorXd dmean = tg[y].mean - mu;
    out.value += dmean.squaredNorm();
    MatrixXd& sd = seed_at(e);
    for (std::size_t j = 0; j < rows[y].size(); ++j) sd.row(rows[y][j]) = -2.0 / msz * dmean.transpose();
    if (options_.method == MatchMethod::moment) {
      VectorXd dvar = tg[y].var - col_var(h);
      out.value += dvar.squaredNorm();
      for (std::size_t j = 0; j < rows[y].size(); ++j)
        sd.row(rows[y][j]) +=
            (-2.0 * dvar.cwiseProduct(2.0 / msz * (h.row(static_cast<Index>(j)).transpose() - mu))).transpose();
    }
  }
  out.grad = m.feature_vjp(s, seeds);
  return out;
}

}  // namespace dcond
