#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "ponbranch/nn/tensor.hpp"

namespace ponbranch::nn {

enum class Init { Glorot, Recurrent, Zeros };

/// Named trainable tensors in registration order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    Init init = Init::Glorot;
  };

  Tensor& add(const std::string& name, Shape shape, Init init) {
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, Tensor(std::move(shape)), init});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return entries_[it->second].tensor;
  }
  const Tensor& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /**
   * Weight matrices: uniform in +/- sqrt(6 / (fan_in + fan_out)).
   * Biases: zero. Recurrent matrices use the weight rule unless
   * `orthogonal_recurrent` is set, in which case they are the Q factor of a
   * Gaussian matrix.
   */
  void initialize(std::uint64_t seed, bool orthogonal_recurrent = false) {
    std::mt19937_64 rng(seed);
    for (auto& e : entries_) {
      auto& t = e.tensor;
      if (e.init == Init::Zeros) {
        std::fill(t.values.begin(), t.values.end(), 0.0);
        continue;
      }
      const double fan_in = static_cast<double>(t.rows());
      const double fan_out = static_cast<double>(t.cols());
      if (e.init == Init::Recurrent && orthogonal_recurrent && t.rows() == t.cols()) {
        std::normal_distribution<double> g(0.0, 1.0);
        Eigen::MatrixXd m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
        Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
        for (std::size_t r = 0; r < t.rows(); ++r)
          for (std::size_t c = 0; c < t.cols(); ++c)
            t.at(r, c) = q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        continue;
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : t.values) v = u(rng);
    }
  }

  /// Names, shapes and order; independent of values.
  std::uint64_t architecture_hash() const {
    Hasher h;
    for (const auto& e : entries_) {
      h.add(e.name);
      h.add(static_cast<std::uint64_t>(e.tensor.shape.size()));
      for (auto d : e.tensor.shape) h.add(static_cast<std::uint64_t>(d));
    }
    return h.value();
  }

  std::string value_hash() const {
    Hasher h;
    for (const auto& e : entries_) {
      h.add(e.name);
      h.bytes(e.tensor.values.data(), e.tensor.values.size() * sizeof(double));
    }
    return h.hex();
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// binary checkpoint
//
//   "PSCK"  u32 version  u32 header_len  header bytes (JSON, may be empty)
//   u32 tensor_count
//   per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f64 values[]
//
// All integers and floats little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointFormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointFormatError("checkpoint truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_params(const ParamStore& store, const std::string& header = "") {
  std::string out = "PSCK";
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e.tensor.shape.size()));
    for (auto d : e.tensor.shape) detail::put<std::uint64_t>(out, d);
    for (double v : e.tensor.values) detail::put<double>(out, v);
  }
  return out;
}

struct ParamBlob {
  std::string header;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline ParamBlob parse_params(std::string_view data) {
  detail::Reader in(data);
  if (in.bytes(4) != "PSCK") throw CheckpointFormatError("bad checkpoint magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointFormatError("unsupported checkpoint version " + std::to_string(version));
  ParamBlob blob;
  blob.header = std::string(in.bytes(in.get<std::uint32_t>()));
  const auto count = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(in.bytes(in.get<std::uint32_t>()));
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw CheckpointFormatError("implausible tensor rank in checkpoint");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
    Tensor t(shape);
    for (auto& v : t.values) v = in.get<double>();
    blob.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!in.done()) throw CheckpointFormatError("trailing bytes after checkpoint");
  return blob;
}

/// Copies blob values into a store with the same names and shapes.
inline void assign_params(ParamStore& store, const ParamBlob& blob) {
  if (blob.tensors.size() != store.entries().size())
    throw ValidationError("architecture mismatch: checkpoint has " + std::to_string(blob.tensors.size()) +
                          " tensors, model expects " + std::to_string(store.entries().size()));
  for (std::size_t i = 0; i < blob.tensors.size(); ++i) {
    auto& e = store.entries()[i];
    const auto& [name, t] = blob.tensors[i];
    if (name != e.name || t.shape != e.tensor.shape)
      throw ValidationError("architecture mismatch at tensor " + name + " " + shape_string(t.shape));
    e.tensor.values = t.values;
  }
}

}  // namespace ponbranch::nn
