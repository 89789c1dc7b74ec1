#pragma once

// Checkpoint layout (all integers and doubles little-endian):
//
//   magic   8 bytes  "MULANNCK"
//   u32     format version (1)
//   u32     metadata length, then metadata text "key=value;key=value;..."
//           (variant, input, classes, domains, unlabeled, mada)
//   u32     entry count
//   per entry:
//     u32 key length, key bytes      e.g. "classifier.fc0.weight"
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]         row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mulann/network.hpp"

namespace mulann {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

constexpr std::array<char, 8> kCheckpointMagic{'M', 'U', 'L', 'A', 'N', 'N', 'C', 'K'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& data) : data_(data) {}

  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};

inline std::string spec_metadata(const ArchitectureSpec& s) {
  std::ostringstream os;
  os << "variant=" << variant_name(s.variant) << ";input=";
  for (std::size_t i = 0; i < s.input_shape.size(); ++i) os << (i ? "x" : "") << s.input_shape[i];
  os << ";classes=" << s.classes << ";domains=" << s.domains << ";unlabeled=" << s.unlabeled_domains
     << ";mada=" << (s.mada ? 1 : 0);
  return os.str();
}

inline ArchitectureSpec parse_spec_metadata(const std::string& meta) {
  std::map<std::string, std::string> kv;
  std::istringstream is(meta);
  std::string item;
  while (std::getline(is, item, ';')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint metadata malformed: '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto get = [&kv](const char* k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw CheckpointError(std::string("checkpoint metadata missing '") + k + "'");
    return it->second;
  };
  ArchitectureSpec s;
  s.variant = parse_variant(get("variant"));
  s.input_shape.clear();
  std::istringstream dims(get("input"));
  std::string d;
  while (std::getline(dims, d, 'x')) s.input_shape.push_back(std::stoul(d));
  s.classes = std::stoul(get("classes"));
  s.domains = std::stoul(get("domains"));
  s.unlabeled_domains = std::stoul(get("unlabeled"));
  s.mada = get("mada") == "1";
  return s;
}

}  // namespace detail

inline std::string serialize_checkpoint(NetworkParams& net) {
  std::string out(detail::kCheckpointMagic.begin(), detail::kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, 1);
  const std::string meta = detail::spec_metadata(net.spec);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  auto params = net.named_parameters();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (auto& [name, t] : params) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
    for (std::size_t dim : t->shape) detail::put_le<std::uint64_t>(out, dim);
    for (double v : t->values) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline NetworkParams deserialize_checkpoint(const std::string& data) {
  detail::ByteReader r(data);
  const std::string magic = r.bytes(8);
  if (magic != std::string(detail::kCheckpointMagic.begin(), detail::kCheckpointMagic.end()))
    throw CheckpointError("checkpoint: bad magic at byte 0");
  const auto version = r.le<std::uint32_t>();
  if (version != 1) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const std::string meta = r.bytes(r.le<std::uint32_t>());
  NetworkParams net = build(detail::parse_spec_metadata(meta), 0);
  auto params = net.named_parameters();
  std::map<std::string, Tensor*> by_name(params.begin(), params.end());
  const auto count = r.le<std::uint32_t>();
  if (count != params.size())
    throw CheckpointError("checkpoint: " + std::to_string(count) + " entries, architecture expects " +
                          std::to_string(params.size()));
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.bytes(r.le<std::uint32_t>());
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint: unknown entry '" + name + "'");
    Shape shape(r.le<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(r.le<std::uint64_t>());
    Tensor& t = *it->second;
    if (shape != t.shape)
      throw CheckpointError("checkpoint: entry '" + name + "' has shape " + shape_str(shape) +
                            ", expected " + shape_str(t.shape));
    for (double& v : t.values) v = std::bit_cast<double>(r.le<std::uint64_t>());
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes at " + std::to_string(r.pos()));
  return net;
}

inline void save_checkpoint(NetworkParams& net, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize_checkpoint(net);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot read checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace mulann
