#pragma once

#include <vector>

#include <Eigen/Core>

namespace hpm {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

/// Stacked multichannel signal y = vec(y_1 ... y_N).
///
/// Channel i (0-based) occupies entries [i*n, (i+1)*n) of `data()`.
class ChannelStack {
 public:
  ChannelStack() = default;
  /// Zero stack with `num_channels` channels of `samples` entries each.
  ChannelStack(int samples, int num_channels);
  /// Wraps `data`; throws DimensionError unless data.size() == samples * num_channels.
  ChannelStack(Vector data, int samples, int num_channels);
  /// Builds a stack from equal-length channels.
  static ChannelStack from_channels(const std::vector<Vector>& channels);

  int samples() const { return samples_; }
  int num_channels() const { return num_channels_; }
  const Vector& data() const { return data_; }
  Vector& data() { return data_; }

  auto channel(int i) const { return data_.segment(static_cast<Eigen::Index>(i) * samples_, samples_); }
  auto channel(int i) { return data_.segment(static_cast<Eigen::Index>(i) * samples_, samples_); }

 private:
  Vector data_;
  int samples_ = 0;
  int num_channels_ = 0;
};

/// The rank-constraint system: rank(H_{r_i+1}(y_i)) <= r_i and
/// rank([H_{r+1}(y_1) ... H_{r+1}(y_N)]) <= r.
struct RankSpec {
  std::vector<int> per_channel_ranks;
  int coupled_rank = 0;
  int samples = 0;

  int num_channels() const { return static_cast<int>(per_channel_ranks.size()); }
  /// Throws PreconditionError unless 1 <= r_i <= r <= floor((n-1)/2).
  void validate() const;
};

struct HankelShape {
  int rows = 0;
  int cols = 0;
};

/// Shape of H_{window+1}(y) for a length-`samples` signal replicated over `num_channels` blocks.
HankelShape hankel_shape(int samples, int window, int num_channels = 1);

/// H_{s+1}(y): the (s+1) x (n-s) matrix with entry (i, j) = y(i + j) (0-based).
Matrix hankel_map(const Eigen::Ref<const Vector>& y, int window);

/// Adjoint of hankel_map: entry k is the sum of Y over the anti-diagonal i + j = k.
Vector hankel_adjoint(const Eigen::Ref<const Matrix>& Y);

/// [H_{r+1}(y_1) ... H_{r+1}(y_N)].
Matrix block_hankel_map(const ChannelStack& y, int window);

/// Adjoint of block_hankel_map for signals with `samples` entries per channel.
ChannelStack block_hankel_adjoint(const Eigen::Ref<const Matrix>& W, int samples);

/// Singular values in decreasing order.
Vector singular_values(const Eigen::Ref<const Matrix>& Y);

/// Number of singular values above max(rows, cols) * sigma_1 * 1e-12.
int numerical_rank(const Eigen::Ref<const Matrix>& Y);

/// Frobenius distance from Y to the set of matrices of rank <= k.
double rank_distance(const Eigen::Ref<const Matrix>& Y, int k);

/// Nearest rank-<=k matrix by SVD truncation (Eckart-Young).
Matrix rank_project(const Eigen::Ref<const Matrix>& Y, int k);

struct RankSplit {
  double distance = 0.0;  // rank_distance(Y, k)
  Matrix projection;      // rank_project(Y, k)
};

/// Both quantities from a single SVD.
RankSplit rank_split(const Eigen::Ref<const Matrix>& Y, int k);

}  // namespace hpm
