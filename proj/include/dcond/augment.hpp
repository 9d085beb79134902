#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dcond {

/// b x c x h x w tensor stored row-major (w fastest).
class ImageBatch {
 public:
  ImageBatch(int b, int c, int h, int w);
  ImageBatch(int b, int c, int h, int w, std::vector<double> data);
  /// Each row of `rows` is one sample flattened as c x h x w.
  static ImageBatch from_rows(const Eigen::MatrixXd& rows, int c, int h, int w);
  Eigen::MatrixXd to_rows() const;

  int batch() const { return b_; }
  int channels() const { return c_; }
  int height() const { return h_; }
  int width() const { return w_; }
  std::size_t size() const { return data_.size(); }
  const std::vector<double>& data() const { return data_; }

  double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }
  int b_, c_, h_, w_;
  std::vector<double> data_;
};

/// Original channels followed by the r^2 tiles (row-major tile order, each
/// h/r x w/r tile nearest-neighbour upsampled to h x w): c(r^2 + 1) channels.
ImageBatch multi_formation(const ImageBatch& x, int r);
/// Adjoint of multi_formation (it is linear).
ImageBatch multi_formation_adjoint(const ImageBatch& g, int c, int r);

/// Per-sample 1x1 channel mixing: c x c matrices with nonnegative entries,
/// rows summing to 1.
struct ChannelMixing {
  std::vector<Eigen::MatrixXd> matrices;  // 3b entries, copy k of sample i at k*b + i
};
ChannelMixing draw_channel_mixing(int b, int c, std::uint64_t seed);
/// Output batch 4b: the input followed by three colour-mapped copies, clipped to [0,1].
ImageBatch channel_multi_formation(const ImageBatch& x, std::uint64_t seed);
ImageBatch channel_multi_formation(const ImageBatch& x, const ChannelMixing& mixing);
/// Vector-Jacobian product of channel_multi_formation at x.
ImageBatch channel_multi_formation_vjp(const ImageBatch& x, const ChannelMixing& mixing,
                                       const ImageBatch& g);

enum class SiameseOp { shift, flip, scale };
std::string to_string(SiameseOp op);
SiameseOp parse_siamese_op(const std::string& s);

struct SiameseParams {
  SiameseOp op = SiameseOp::flip;
  int dx = 0, dy = 0;    // shift
  bool mirror = true;    // flip
  double factor = 1.0;   // scale

  static SiameseParams draw(SiameseOp op, int h, int w, std::uint64_t seed);
  static SiameseParams identity(SiameseOp op);
};

ImageBatch apply_siamese(const ImageBatch& x, const SiameseParams& p);
ImageBatch siamese_vjp(const ImageBatch& x, const SiameseParams& p, const ImageBatch& g);

struct SiamesePair {
  ImageBatch t;
  ImageBatch s;
};
/// One parameter draw applied to both batches.
SiamesePair siamese_augment(const ImageBatch& t, const ImageBatch& s, SiameseOp op, std::uint64_t seed);

}  // namespace dcond
