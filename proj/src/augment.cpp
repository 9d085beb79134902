#include "dcond/augment.hpp"

#include "dcond/error.hpp"
#include "dcond/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dcond {

ImageBatch::ImageBatch(int b, int c, int h, int w)
    : ImageBatch(b, c, h, w, std::vector<double>(static_cast<std::size_t>(b) * c * h * w, 0.0)) {}

ImageBatch::ImageBatch(int b, int c, int h, int w, std::vector<double> data)
    : b_(b), c_(c), h_(h), w_(w), data_(std::move(data)) {
  require(b >= 1 && c >= 1 && h >= 1 && w >= 1, ErrorKind::shape, "image batch dims must be >= 1");
  require(data_.size() == static_cast<std::size_t>(b) * c * h * w, ErrorKind::shape,
          "image batch data has the wrong length");
  for (double v : data_) require(std::isfinite(v), ErrorKind::validation, "non-finite pixel value");
}

ImageBatch ImageBatch::from_rows(const Eigen::MatrixXd& rows, int c, int h, int w) {
  require(rows.cols() == static_cast<Eigen::Index>(c) * h * w, ErrorKind::shape,
          "row length does not match c x h x w");
  std::vector<double> data(static_cast<std::size_t>(rows.size()));
  std::size_t at = 0;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = 0; j < rows.cols(); ++j) data[at++] = rows(i, j);
  return ImageBatch(static_cast<int>(rows.rows()), c, h, w, std::move(data));
}

Eigen::MatrixXd ImageBatch::to_rows() const {
  const Eigen::Index per = static_cast<Eigen::Index>(c_) * h_ * w_;
  Eigen::MatrixXd out(b_, per);
  std::size_t at = 0;
  for (Eigen::Index i = 0; i < b_; ++i)
    for (Eigen::Index j = 0; j < per; ++j) out(i, j) = data_[at++];
  return out;
}

namespace {

void check_formation_input(const ImageBatch& x, int r) {
  require(r >= 1, ErrorKind::shape, "formation factor must be >= 1");
  require(!(x.height() == 1 && x.width() == 1), ErrorKind::shape,
          "formation needs spatial inputs, got 1x1");
  require(x.height() % r == 0 && x.width() % r == 0, ErrorKind::shape,
          "image size " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
              " is not divisible by the formation factor " + std::to_string(r));
}

}  // namespace

ImageBatch multi_formation(const ImageBatch& x, int r) {
  check_formation_input(x, r);
  const int c = x.channels(), h = x.height(), w = x.width();
  const int th = h / r, tw = w / r;
  ImageBatch out(x.batch(), c * (r * r + 1), h, w);
  for (int n = 0; n < x.batch(); ++n)
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          out.at(n, k, y, xx) = x.at(n, k, y, xx);
          for (int ty = 0; ty < r; ++ty)
            for (int tx = 0; tx < r; ++tx)
              out.at(n, c + (ty * r + tx) * c + k, y, xx) = x.at(n, k, ty * th + y / r, tx * tw + xx / r);
        }
  return out;
}

ImageBatch multi_formation_adjoint(const ImageBatch& g, int c, int r) {
  require(g.channels() == c * (r * r + 1), ErrorKind::shape, "adjoint channel count mismatch");
  const int h = g.height(), w = g.width();
  const int th = h / r, tw = w / r;
  ImageBatch out(g.batch(), c, h, w);
  for (int n = 0; n < g.batch(); ++n)
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          out.at(n, k, y, xx) += g.at(n, k, y, xx);
          for (int ty = 0; ty < r; ++ty)
            for (int tx = 0; tx < r; ++tx)
              out.at(n, k, ty * th + y / r, tx * tw + xx / r) += g.at(n, c + (ty * r + tx) * c + k, y, xx);
        }
  return out;
}

ChannelMixing draw_channel_mixing(int b, int c, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ChannelMixing m;
  for (int k = 0; k < 3 * b; ++k) {
    Eigen::MatrixXd a(c, c);
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j) a(i, j) = unit(rng);
      a.row(i) /= a.row(i).sum();
    }
    m.matrices.push_back(std::move(a));
  }
  return m;
}

namespace {

double mixed(const ImageBatch& x, const Eigen::MatrixXd& a, int n, int k, int y, int xx) {
  double v = 0.0;
  for (int j = 0; j < x.channels(); ++j) v += a(k, j) * x.at(n, j, y, xx);
  return v;
}

}  // namespace

ImageBatch channel_multi_formation(const ImageBatch& x, std::uint64_t seed) {
  return channel_multi_formation(x, draw_channel_mixing(x.batch(), x.channels(), seed));
}

ImageBatch channel_multi_formation(const ImageBatch& x, const ChannelMixing& mixing) {
  const int b = x.batch(), c = x.channels(), h = x.height(), w = x.width();
  require(mixing.matrices.size() == static_cast<std::size_t>(3 * b), ErrorKind::shape,
          "need three mixing matrices per sample");
  ImageBatch out(4 * b, c, h, w);
  for (int n = 0; n < b; ++n)
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(n, k, y, xx) = x.at(n, k, y, xx);
  for (int copy = 1; copy <= 3; ++copy)
    for (int n = 0; n < b; ++n) {
      const auto& a = mixing.matrices[static_cast<std::size_t>((copy - 1) * b + n)];
      require(a.rows() == c && a.cols() == c, ErrorKind::shape, "mixing matrix must be c x c");
      for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            out.at(copy * b + n, k, y, xx) = std::clamp(mixed(x, a, n, k, y, xx), 0.0, 1.0);
    }
  return out;
}

ImageBatch channel_multi_formation_vjp(const ImageBatch& x, const ChannelMixing& mixing,
                                       const ImageBatch& g) {
  const int b = x.batch(), c = x.channels(), h = x.height(), w = x.width();
  require(g.batch() == 4 * b && g.channels() == c && g.height() == h && g.width() == w,
          ErrorKind::shape, "vjp seed shape mismatch");
  ImageBatch out(b, c, h, w);
  for (int n = 0; n < b; ++n)
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(n, k, y, xx) = g.at(n, k, y, xx);
  for (int copy = 1; copy <= 3; ++copy)
    for (int n = 0; n < b; ++n) {
      const auto& a = mixing.matrices[static_cast<std::size_t>((copy - 1) * b + n)];
      for (int k = 0; k < c; ++k)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) {
            const double v = mixed(x, a, n, k, y, xx);
            if (v < 0.0 || v > 1.0) continue;  // clipped
            const double gv = g.at(copy * b + n, k, y, xx);
            for (int j = 0; j < c; ++j) out.at(n, j, y, xx) += a(k, j) * gv;
          }
    }
  return out;
}

std::string to_string(SiameseOp op) {
  switch (op) {
    case SiameseOp::shift: return "shift";
    case SiameseOp::flip: return "flip";
    case SiameseOp::scale: return "scale";
  }
  return "?";
}

SiameseOp parse_siamese_op(const std::string& s) {
  for (auto op : {SiameseOp::shift, SiameseOp::flip, SiameseOp::scale})
    if (to_string(op) == s) return op;
  fail(ErrorKind::config, "unknown siamese augmentation '" + s + "'");
}

SiameseParams SiameseParams::draw(SiameseOp op, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  SiameseParams p;
  p.op = op;
  switch (op) {
    case SiameseOp::shift: {
      std::uniform_int_distribution<int> sy(-(h / 8), h / 8), sx(-(w / 8), w / 8);
      p.dy = sy(rng);
      p.dx = sx(rng);
      break;
    }
    case SiameseOp::flip: p.mirror = std::bernoulli_distribution(0.5)(rng); break;
    case SiameseOp::scale: p.factor = std::uniform_real_distribution<double>(0.8, 1.2)(rng); break;
  }
  return p;
}

SiameseParams SiameseParams::identity(SiameseOp op) {
  SiameseParams p;
  p.op = op;
  p.mirror = false;
  return p;
}

ImageBatch apply_siamese(const ImageBatch& x, const SiameseParams& p) {
  const int h = x.height(), w = x.width();
  ImageBatch out(x.batch(), x.channels(), h, w);
  for (int n = 0; n < x.batch(); ++n)
    for (int k = 0; k < x.channels(); ++k)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          switch (p.op) {
            case SiameseOp::shift: {
              const int sy = y - p.dy, sx = xx - p.dx;
              out.at(n, k, y, xx) = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? x.at(n, k, sy, sx) : 0.0;
              break;
            }
            case SiameseOp::flip:
              out.at(n, k, y, xx) = p.mirror ? x.at(n, k, y, w - 1 - xx) : x.at(n, k, y, xx);
              break;
            case SiameseOp::scale:
              out.at(n, k, y, xx) = std::clamp(p.factor * x.at(n, k, y, xx), 0.0, 1.0);
              break;
          }
        }
  return out;
}

ImageBatch siamese_vjp(const ImageBatch& x, const SiameseParams& p, const ImageBatch& g) {
  const int h = x.height(), w = x.width();
  ImageBatch out(x.batch(), x.channels(), h, w);
  for (int n = 0; n < x.batch(); ++n)
    for (int k = 0; k < x.channels(); ++k)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double gv = g.at(n, k, y, xx);
          switch (p.op) {
            case SiameseOp::shift: {
              const int sy = y - p.dy, sx = xx - p.dx;
              if (sy >= 0 && sy < h && sx >= 0 && sx < w) out.at(n, k, sy, sx) += gv;
              break;
            }
            case SiameseOp::flip:
              out.at(n, k, y, p.mirror ? w - 1 - xx : xx) += gv;
              break;
            case SiameseOp::scale: {
              const double v = p.factor * x.at(n, k, y, xx);
              if (v >= 0.0 && v <= 1.0) out.at(n, k, y, xx) += p.factor * gv;
              break;
            }
          }
        }
  return out;
}

SiamesePair siamese_augment(const ImageBatch& t, const ImageBatch& s, SiameseOp op, std::uint64_t seed) {
  require(t.channels() == s.channels() && t.height() == s.height() && t.width() == s.width(),
          ErrorKind::shape, "siamese batches differ in sample shape");
  auto p = SiameseParams::draw(op, t.height(), t.width(), seed);
  return {apply_siamese(t, p), apply_siamese(s, p)};
}

}  // namespace dcond
