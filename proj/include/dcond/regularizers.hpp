#pragma once

#include "dcond/data.hpp"
#include "dcond/mlp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dcond {

enum class RegularizerId { intra, inter, rep, div, con, cos, dis, proj };
std::string to_string(RegularizerId id);
RegularizerId parse_regularizer(const std::string& s);

struct RegularizerTerm {
  RegularizerId id = RegularizerId::div;
  double weight = 0.0;
  double tau = 1.0;  // temperature or margin; unused by rep, div, cos, dis, proj
};

void validate(const RegularizerTerm& term);

/// Everything a regularizer may read. Pointers are non-owning; a term whose
/// input is missing raises a context error.
struct RegularizerContext {
  const std::vector<Mlp>* models = nullptr;
  const Eigen::MatrixXd* s = nullptr;  // synthetic features, class-major
  const Labels* s_labels = nullptr;
  int class_count = 0;
  const LabeledDataset* t = nullptr;
  const Trajectory* trajectory = nullptr;
  const Eigen::VectorXd* theta = nullptr;
};

/// Cosine similarity with norms floored at 1e-12.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// intra: mean over synthetic rows; c(y) is the mean embedding of T^y under the first model.
/// inter: sum over ordered class pairs. rep, div: mean over synthetic rows.
/// con, cos: summed over classes, averaged as written over the model pairs.
/// dis: softmax at temperature 1, first model. proj: l1 distance from theta to
/// the span of the trajectory snapshots.
double regularizer_eval(const RegularizerTerm& term, const RegularizerContext& ctx);

/// Central-difference gradient w.r.t. the synthetic features.
Eigen::MatrixXd regularizer_gradient(const RegularizerTerm& term, const RegularizerContext& ctx,
                                     double step = 1e-6);

/// Orthogonal projection of theta onto the span of the snapshots.
Eigen::VectorXd project_onto_span(const Eigen::VectorXd& theta,
                                  const std::vector<Eigen::VectorXd>& snapshots);

}  // namespace dcond
