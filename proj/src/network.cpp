#include "clickseg/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "clickseg/cloud_io.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

namespace {

using RowMat = EmbeddingMatrix;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

struct Offsets {
  Eigen::Index w1, b1, w2, b2, w3, b3, end;
};

Offsets offsets_of(const NetworkShape& s) {
  Offsets o{};
  o.w1 = 0;
  o.b1 = o.w1 + static_cast<Eigen::Index>(s.input_dim) * s.hidden;
  o.w2 = o.b1 + s.hidden;
  o.b2 = o.w2 + static_cast<Eigen::Index>(2 * s.hidden) * s.hidden;
  o.w3 = o.b2 + s.hidden;
  o.b3 = o.w3 + static_cast<Eigen::Index>(2 * s.hidden) * s.output_dim;
  o.end = o.b3 + s.output_dim;
  return o;
}

/// out_i = (x_i + sum over neighbours x_j) / (k + 1)
RowMat neighborhood_mean(const RowMat& x, const KnnTable& nb) {
  RowMat out = x;
  const double scale = 1.0 / static_cast<double>(nb.k() + 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (PointIndex j : nb.neighbors(static_cast<std::size_t>(i))) out.row(i) += x.row(j);
  }
  return out * scale;
}

/// Adjoint of neighborhood_mean.
RowMat neighborhood_mean_adjoint(const RowMat& g, const KnnTable& nb) {
  RowMat out = g;
  const double scale = 1.0 / static_cast<double>(nb.k() + 1);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (PointIndex j : nb.neighbors(static_cast<std::size_t>(i))) out.row(j) += g.row(i);
  }
  return out * scale;
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& s, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
std::uint64_t get_le(const std::string& s, std::size_t& pos, int bytes) {
  if (pos + static_cast<std::size_t>(bytes) > s.size()) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

constexpr char kMagic[8] = {'C', 'S', 'E', 'G', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::size_t NetworkShape::parameter_count() const { return static_cast<std::size_t>(offsets_of(*this).end); }

NetworkInput prepare_input(const PointCloud& cloud, int aggregate_k, const DescriptorConfig& descriptor) {
  const NeighborIndex index(cloud);
  const EmbeddingMatrix desc = compute_descriptors(cloud, index, descriptor);
  NetworkInput in;
  in.features.resize(static_cast<Eigen::Index>(cloud.size()), 6 + desc.cols());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    in.features.block(r, 0, 1, 3) = cloud.position(i).transpose();
    in.features.block(r, 3, 1, 3) = cloud.normal(i).transpose();
    in.features.block(r, 6, 1, desc.cols()) = desc.row(r);
  }
  in.neighbors = KnnTable(index, static_cast<std::size_t>(aggregate_k));
  return in;
}

PointNetwork::PointNetwork(NetworkShape shape)
    : shape_(shape), params_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.parameter_count()))) {}

void PointNetwork::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != params_.size()) throw std::invalid_argument("parameter vector has the wrong length");
  params_ = p;
}

void PointNetwork::initialize(std::uint64_t seed) {
  const Offsets o = offsets_of(shape_);
  Rng rng(seed);
  params_.setZero();
  auto fill = [&](Eigen::Index begin, Eigen::Index count, double stddev) {
    for (Eigen::Index i = 0; i < count; ++i) params_[begin + i] = stddev * rng.normal();
  };
  fill(o.w1, o.b1 - o.w1, std::sqrt(2.0 / shape_.input_dim));
  fill(o.w2, o.b2 - o.w2, std::sqrt(2.0 / (2.0 * shape_.hidden)));
  fill(o.w3, o.b3 - o.w3, std::sqrt(1.0 / (2.0 * shape_.hidden)));
}

EmbeddingMatrix PointNetwork::forward(const NetworkInput& input, ForwardCache* cache) const {
  if (input.features.cols() != shape_.input_dim) {
    throw std::invalid_argument("network expects " + std::to_string(shape_.input_dim) + " input features, got " +
                                std::to_string(input.features.cols()));
  }
  const Offsets o = offsets_of(shape_);
  const int h = shape_.hidden;
  const ConstMap w1(params_.data() + o.w1, shape_.input_dim, h);
  const Eigen::Map<const Eigen::RowVectorXd> b1(params_.data() + o.b1, h);
  const ConstMap w2(params_.data() + o.w2, 2 * h, h);
  const Eigen::Map<const Eigen::RowVectorXd> b2(params_.data() + o.b2, h);
  const ConstMap w3(params_.data() + o.w3, 2 * h, shape_.output_dim);
  const Eigen::Map<const Eigen::RowVectorXd> b3(params_.data() + o.b3, shape_.output_dim);
  const Eigen::Index n = input.features.rows();

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.pre1.noalias() = input.features * w1;
  c.pre1.rowwise() += b1;
  c.act1 = c.pre1.cwiseMax(0.0);
  c.cat1.resize(n, 2 * h);
  c.cat1.leftCols(h) = c.act1;
  c.cat1.rightCols(h) = neighborhood_mean(c.act1, input.neighbors);

  c.pre2.noalias() = c.cat1 * w2;
  c.pre2.rowwise() += b2;
  c.act2 = c.pre2.cwiseMax(0.0);
  c.cat2.resize(n, 2 * h);
  c.cat2.leftCols(h) = c.act2;
  c.cat2.rightCols(h) = neighborhood_mean(c.act2, input.neighbors);

  EmbeddingMatrix z;
  z.noalias() = c.cat2 * w3;
  z.rowwise() += b3;
  return z;
}

Eigen::VectorXd PointNetwork::backward(const NetworkInput& input, const ForwardCache& c,
                                       const EmbeddingMatrix& grad_z) const {
  const Offsets o = offsets_of(shape_);
  const int h = shape_.hidden;
  const ConstMap w2(params_.data() + o.w2, 2 * h, h);
  const ConstMap w3(params_.data() + o.w3, 2 * h, shape_.output_dim);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  Map(grad.data() + o.w3, 2 * h, shape_.output_dim).noalias() = c.cat2.transpose() * grad_z;
  Eigen::Map<Eigen::RowVectorXd>(grad.data() + o.b3, shape_.output_dim) = grad_z.colwise().sum();

  RowMat g_cat2;
  g_cat2.noalias() = grad_z * w3.transpose();
  RowMat g_pre2 = g_cat2.leftCols(h) + neighborhood_mean_adjoint(g_cat2.rightCols(h), input.neighbors);
  g_pre2 = g_pre2.cwiseProduct((c.pre2.array() > 0.0).cast<double>().matrix());
  Map(grad.data() + o.w2, 2 * h, h).noalias() = c.cat1.transpose() * g_pre2;
  Eigen::Map<Eigen::RowVectorXd>(grad.data() + o.b2, h) = g_pre2.colwise().sum();

  RowMat g_cat1;
  g_cat1.noalias() = g_pre2 * w2.transpose();
  RowMat g_pre1 = g_cat1.leftCols(h) + neighborhood_mean_adjoint(g_cat1.rightCols(h), input.neighbors);
  g_pre1 = g_pre1.cwiseProduct((c.pre1.array() > 0.0).cast<double>().matrix());
  Map(grad.data() + o.w1, shape_.input_dim, h).noalias() = input.features.transpose() * g_pre1;
  Eigen::Map<Eigen::RowVectorXd>(grad.data() + o.b1, h) = g_pre1.colwise().sum();
  return grad;
}

namespace {

/// Sorted union of `points` and their neighbours; fills the position map.
std::vector<PointIndex> expand(std::span<const PointIndex> points, const KnnTable& nb, std::vector<int>& local) {
  std::vector<PointIndex> out(points.begin(), points.end());
  for (PointIndex p : points) {
    const auto n = nb.neighbors(static_cast<std::size_t>(p));
    out.insert(out.end(), n.begin(), n.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  local.assign(nb.size(), -1);
  for (std::size_t i = 0; i < out.size(); ++i) local[static_cast<std::size_t>(out[i])] = static_cast<int>(i);
  return out;
}

/// Rows `targets` of [a, mean over the point and its neighbours of a], where
/// `a` is indexed through `local`.
RowMat concat_mean(const RowMat& a, std::span<const PointIndex> targets, const std::vector<int>& local,
                   const KnnTable& nb) {
  const Eigen::Index h = a.cols();
  const double scale = 1.0 / static_cast<double>(nb.k() + 1);
  RowMat out(static_cast<Eigen::Index>(targets.size()), 2 * h);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const auto t = static_cast<std::size_t>(targets[r]);
    const auto row = static_cast<Eigen::Index>(r);
    const auto self = a.row(local[t]);
    out.row(row).leftCols(h) = self;
    Eigen::RowVectorXd acc = self;
    for (PointIndex j : nb.neighbors(t)) acc += a.row(local[static_cast<std::size_t>(j)]);
    out.row(row).rightCols(h) = acc * scale;
  }
  return out;
}

/// Adjoint of concat_mean: gradient on `a` (rows indexed through `local`).
RowMat concat_mean_adjoint(const RowMat& g, std::span<const PointIndex> targets, const std::vector<int>& local,
                           const KnnTable& nb, Eigen::Index rows) {
  const Eigen::Index h = g.cols() / 2;
  const double scale = 1.0 / static_cast<double>(nb.k() + 1);
  RowMat out = RowMat::Zero(rows, h);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const auto t = static_cast<std::size_t>(targets[r]);
    const auto row = static_cast<Eigen::Index>(r);
    const Eigen::RowVectorXd m = g.row(row).rightCols(h) * scale;
    out.row(local[t]) += g.row(row).leftCols(h) + m;
    for (PointIndex j : nb.neighbors(t)) out.row(local[static_cast<std::size_t>(j)]) += m;
  }
  return out;
}

}  // namespace

EmbeddingMatrix PointNetwork::forward_rows(const NetworkInput& input, std::span<const PointIndex> rows,
                                           RowsCache* cache) const {
  if (input.features.cols() != shape_.input_dim) throw std::invalid_argument("network input has the wrong width");
  for (PointIndex r : rows) {
    if (r < 0 || static_cast<std::size_t>(r) >= input.size()) throw std::out_of_range("row index out of range");
  }
  const Offsets o = offsets_of(shape_);
  const int h = shape_.hidden;
  const ConstMap w1(params_.data() + o.w1, shape_.input_dim, h);
  const Eigen::Map<const Eigen::RowVectorXd> b1(params_.data() + o.b1, h);
  const ConstMap w2(params_.data() + o.w2, 2 * h, h);
  const Eigen::Map<const Eigen::RowVectorXd> b2(params_.data() + o.b2, h);
  const ConstMap w3(params_.data() + o.w3, 2 * h, shape_.output_dim);
  const Eigen::Map<const Eigen::RowVectorXd> b3(params_.data() + o.b3, shape_.output_dim);

  RowsCache local;
  RowsCache& c = cache ? *cache : local;
  c.rows.assign(rows.begin(), rows.end());
  c.s2 = expand(rows, input.neighbors, c.local2);
  c.s1 = expand(c.s2, input.neighbors, c.local1);

  c.x1.resize(static_cast<Eigen::Index>(c.s1.size()), shape_.input_dim);
  for (std::size_t i = 0; i < c.s1.size(); ++i) c.x1.row(static_cast<Eigen::Index>(i)) = input.features.row(c.s1[i]);
  c.pre1.noalias() = c.x1 * w1;
  c.pre1.rowwise() += b1;
  c.act1 = c.pre1.cwiseMax(0.0);
  c.cat1 = concat_mean(c.act1, c.s2, c.local1, input.neighbors);
  c.pre2.noalias() = c.cat1 * w2;
  c.pre2.rowwise() += b2;
  c.act2 = c.pre2.cwiseMax(0.0);
  c.cat2 = concat_mean(c.act2, c.rows, c.local2, input.neighbors);
  EmbeddingMatrix z;
  z.noalias() = c.cat2 * w3;
  z.rowwise() += b3;
  return z;
}

Eigen::VectorXd PointNetwork::backward_rows(const NetworkInput& input, const RowsCache& c,
                                            const EmbeddingMatrix& grad_rows) const {
  const Offsets o = offsets_of(shape_);
  const int h = shape_.hidden;
  const ConstMap w2(params_.data() + o.w2, 2 * h, h);
  const ConstMap w3(params_.data() + o.w3, 2 * h, shape_.output_dim);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  Map(grad.data() + o.w3, 2 * h, shape_.output_dim).noalias() = c.cat2.transpose() * grad_rows;
  Eigen::Map<Eigen::RowVectorXd>(grad.data() + o.b3, shape_.output_dim) = grad_rows.colwise().sum();

  RowMat g_cat2;
  g_cat2.noalias() = grad_rows * w3.transpose();
  RowMat g_pre2 = concat_mean_adjoint(g_cat2, c.rows, c.local2, input.neighbors, c.act2.rows());
  g_pre2 = g_pre2.cwiseProduct((c.pre2.array() > 0.0).cast<double>().matrix());
  Map(grad.data() + o.w2, 2 * h, h).noalias() = c.cat1.transpose() * g_pre2;
  Eigen::Map<Eigen::RowVectorXd>(grad.data() + o.b2, h) = g_pre2.colwise().sum();

  RowMat g_cat1;
  g_cat1.noalias() = g_pre2 * w2.transpose();
  RowMat g_pre1 = concat_mean_adjoint(g_cat1, c.s2, c.local1, input.neighbors, c.act1.rows());
  g_pre1 = g_pre1.cwiseProduct((c.pre1.array() > 0.0).cast<double>().matrix());
  Map(grad.data() + o.w1, shape_.input_dim, h).noalias() = c.x1.transpose() * g_pre1;
  Eigen::Map<Eigen::RowVectorXd>(grad.data() + o.b1, h) = g_pre1.colwise().sum();
  return grad;
}

void save_checkpoint(const std::filesystem::path& path, const PointNetwork& net) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  const NetworkShape& s = net.shape();
  std::string bytes(kMagic, sizeof kMagic);
  put_u32(bytes, kVersion);
  put_u32(bytes, static_cast<std::uint32_t>(s.input_dim));
  put_u32(bytes, static_cast<std::uint32_t>(s.hidden));
  put_u32(bytes, static_cast<std::uint32_t>(s.output_dim));
  put_u32(bytes, static_cast<std::uint32_t>(s.aggregate_k));
  put_u64(bytes, static_cast<std::uint64_t>(net.parameters().size()));
  const auto* raw = reinterpret_cast<const char*>(net.parameters().data());
  bytes.append(raw, static_cast<std::size_t>(net.parameters().size()) * sizeof(double));
  write_file_atomic(path, bytes);
}

PointNetwork load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(path.string() + ": not a network checkpoint");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le(bytes, pos, 4);
  if (version != kVersion) throw std::runtime_error(path.string() + ": unsupported checkpoint version");
  NetworkShape s;
  s.input_dim = static_cast<int>(get_le(bytes, pos, 4));
  s.hidden = static_cast<int>(get_le(bytes, pos, 4));
  s.output_dim = static_cast<int>(get_le(bytes, pos, 4));
  s.aggregate_k = static_cast<int>(get_le(bytes, pos, 4));
  const auto count = get_le(bytes, pos, 8);
  if (count != s.parameter_count()) throw std::runtime_error(path.string() + ": parameter count mismatch");
  if (bytes.size() - pos != count * sizeof(double)) throw std::runtime_error(path.string() + ": checkpoint truncated");
  PointNetwork net(s);
  std::memcpy(net.parameters().data(), bytes.data() + pos, count * sizeof(double));
  return net;
}

}  // namespace clickseg
