#include "hpm/hankel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/SVD>

#include "hpm/errors.hpp"

namespace hpm {

ChannelStack::ChannelStack(int samples, int num_channels)
    : ChannelStack(Vector::Zero(static_cast<Eigen::Index>(samples) * num_channels), samples,
                   num_channels) {}

ChannelStack::ChannelStack(Vector data, int samples, int num_channels)
    : data_(std::move(data)), samples_(samples), num_channels_(num_channels) {
  if (samples <= 0 || num_channels <= 0) {
    throw DimensionError("ChannelStack: samples and channel count must be positive");
  }
  if (data_.size() != static_cast<Eigen::Index>(samples) * num_channels) {
    throw DimensionError("ChannelStack: data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(samples) + " x " + std::to_string(num_channels));
  }
}

ChannelStack ChannelStack::from_channels(const std::vector<Vector>& channels) {
  if (channels.empty()) throw DimensionError("ChannelStack: no channels");
  const auto n = static_cast<int>(channels.front().size());
  ChannelStack out(n, static_cast<int>(channels.size()));
  for (int i = 0; i < out.num_channels(); ++i) {
    if (channels[i].size() != n) throw DimensionError("ChannelStack: unequal channel lengths");
    out.channel(i) = channels[i];
  }
  return out;
}

void RankSpec::validate() const {
  if (per_channel_ranks.empty()) throw PreconditionError("RankSpec: no channels");
  const int cap = (samples - 1) / 2;
  if (coupled_rank < 1 || coupled_rank > cap) {
    throw PreconditionError("RankSpec: coupled rank " + std::to_string(coupled_rank) +
                            " outside [1, " + std::to_string(cap) + "]");
  }
  for (int r : per_channel_ranks) {
    if (r < 1 || r > coupled_rank) {
      throw PreconditionError("RankSpec: per-channel rank " + std::to_string(r) +
                              " outside [1, " + std::to_string(coupled_rank) + "]");
    }
  }
}

HankelShape hankel_shape(int samples, int window, int num_channels) {
  if (window < 0 || window + 1 > samples) {
    throw DimensionError("hankel: window " + std::to_string(window) + " does not fit " +
                         std::to_string(samples) + " samples");
  }
  return {window + 1, num_channels * (samples - window)};
}

Matrix hankel_map(const Eigen::Ref<const Vector>& y, int window) {
  const HankelShape shape = hankel_shape(static_cast<int>(y.size()), window);
  Matrix H(shape.rows, shape.cols);
  for (int j = 0; j < shape.cols; ++j) H.col(j) = y.segment(j, shape.rows);
  return H;
}

Vector hankel_adjoint(const Eigen::Ref<const Matrix>& Y) {
  if (Y.rows() < 1 || Y.cols() < 1) throw DimensionError("hankel_adjoint: empty matrix");
  Vector out = Vector::Zero(Y.rows() + Y.cols() - 1);
  for (Eigen::Index j = 0; j < Y.cols(); ++j) out.segment(j, Y.rows()) += Y.col(j);
  return out;
}

Matrix block_hankel_map(const ChannelStack& y, int window) {
  const int n = y.samples();
  const HankelShape shape = hankel_shape(n, window, y.num_channels());
  const int width = n - window;
  Matrix H(shape.rows, shape.cols);
  for (int i = 0; i < y.num_channels(); ++i) {
    const auto ch = y.channel(i);
    for (int j = 0; j < width; ++j) H.col(i * width + j) = ch.segment(j, shape.rows);
  }
  return H;
}

ChannelStack block_hankel_adjoint(const Eigen::Ref<const Matrix>& W, int samples) {
  const auto window = static_cast<int>(W.rows()) - 1;
  const int width = samples - window;
  if (window < 0 || width < 1 || W.cols() == 0 || W.cols() % width != 0) {
    throw DimensionError("block_hankel_adjoint: " + std::to_string(W.cols()) +
                         " columns do not split into blocks of " + std::to_string(width));
  }
  ChannelStack out(samples, static_cast<int>(W.cols() / width));
  for (int i = 0; i < out.num_channels(); ++i) {
    out.channel(i) = hankel_adjoint(W.middleCols(static_cast<Eigen::Index>(i) * width, width));
  }
  return out;
}

namespace {

template <int Options>
auto checked_svd(const Eigen::Ref<const Matrix>& Y) {
  Eigen::JacobiSVD<Matrix> svd(Y, Options);
  if (svd.info() != Eigen::Success) throw NumericalError("SVD failed (non-finite input?)");
  return svd;
}

}  // namespace

Vector singular_values(const Eigen::Ref<const Matrix>& Y) {
  if (Y.size() == 0) return Vector();
  return checked_svd<0>(Y).singularValues();
}

int numerical_rank(const Eigen::Ref<const Matrix>& Y) {
  const Vector s = singular_values(Y);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double tol = static_cast<double>(std::max(Y.rows(), Y.cols())) * s(0) * 1e-12;
  return static_cast<int>((s.array() > tol).count());
}

double rank_distance(const Eigen::Ref<const Matrix>& Y, int k) {
  const auto full = static_cast<int>(std::min(Y.rows(), Y.cols()));
  if (k < 0 || k > full) throw DimensionError("rank_distance: rank bound out of range");
  if (k == full) return 0.0;
  const Vector s = singular_values(Y);
  return s.tail(full - k).norm();
}

RankSplit rank_split(const Eigen::Ref<const Matrix>& Y, int k) {
  const auto full = static_cast<int>(std::min(Y.rows(), Y.cols()));
  if (k < 0 || k > full) throw DimensionError("rank_split: rank bound out of range");
  if (k == full) return {0.0, Y};
  if (k == 0) return {Y.norm(), Matrix::Zero(Y.rows(), Y.cols())};
  // Project with the singular vectors of the short side: U_k U_k^T Y or Y V_k V_k^T.
  if (Y.rows() <= Y.cols()) {
    const auto svd = checked_svd<Eigen::ComputeThinU>(Y);
    const auto Uk = svd.matrixU().leftCols(k);
    return {svd.singularValues().tail(full - k).norm(), Uk * (Uk.transpose() * Y)};
  }
  const auto svd = checked_svd<Eigen::ComputeThinV>(Y);
  const auto Vk = svd.matrixV().leftCols(k);
  return {svd.singularValues().tail(full - k).norm(), (Y * Vk) * Vk.transpose()};
}

Matrix rank_project(const Eigen::Ref<const Matrix>& Y, int k) { return rank_split(Y, k).projection; }

}  // namespace hpm
