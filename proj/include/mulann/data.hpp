#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>
#include <array>

#include "mulann/tensor.hpp"

namespace mulann {

/// Independent deterministic stream derived from a base seed and a stream tag.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

/// Role of a sample: labeled training sample, unlabeled training sample, or a
/// held-out sample never shown to training.
enum class Pool : std::uint8_t { labeled, unlabeled, held_out };

inline const char* pool_name(Pool p) {
  switch (p) {
    case Pool::labeled: return "labeled";
    case Pool::unlabeled: return "unlabeled";
    case Pool::held_out: return "held_out";
  }
  return "?";
}

enum class EvalSetting { ft, nft };

inline const char* setting_name(EvalSetting s) { return s == EvalSetting::ft ? "FT" : "NFT"; }

inline EvalSetting parse_setting(const std::string& s) {
  if (s == "FT" || s == "ft") return EvalSetting::ft;
  if (s == "NFT" || s == "nft") return EvalSetting::nft;
  throw std::invalid_argument("evaluation setting must be FT or NFT, got '" + s + "'");
}

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DomainDataset {
  std::size_t domain = 0;
  Shape sample_shape{2};
  std::size_t classes = 2;
  std::vector<double> features;  // row-major [size(), dim()]
  std::vector<std::size_t> labels;
  std::vector<Pool> pool;
  /// Stable identity of each sample across splits, for train/eval overlap checks.
  std::vector<std::uint64_t> ids;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return shape_numel(sample_shape); }
  bool is_labeled(std::size_t i) const { return pool[i] == Pool::labeled; }

  const double* row(std::size_t i) const { return &features[i * dim()]; }

  /// Classes with at least one labeled sample.
  std::set<std::size_t> labeled_classes() const {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < size(); ++i)
      if (pool[i] == Pool::labeled) s.insert(labels[i]);
    return s;
  }

  /// Classes appearing among samples without a label (training-unlabeled or held out).
  std::set<std::size_t> unlabeled_classes() const {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < size(); ++i)
      if (pool[i] != Pool::labeled) s.insert(labels[i]);
    return s;
  }

  std::vector<bool> labeled_class_mask() const {
    std::vector<bool> m(classes, false);
    for (auto c : labeled_classes()) m[c] = true;
    return m;
  }

  std::vector<std::size_t> indices_in(Pool p) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (pool[i] == p) out.push_back(i);
    return out;
  }

  std::size_t count(Pool p) const { return static_cast<std::size_t>(std::count(pool.begin(), pool.end(), p)); }

  /// Stacks the selected samples into an [k, dim] tensor.
  Tensor gather(std::span<const std::size_t> idx) const {
    Tensor t(Shape{idx.size(), dim()});
    for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(row(idx[r]), dim(), &t.values[r * dim()]);
    return t;
  }

  void push(const double* x, std::size_t label, Pool p, std::uint64_t id) {
    features.insert(features.end(), x, x + dim());
    labels.push_back(label);
    pool.push_back(p);
    ids.push_back(id);
  }

  void validate() const {
    if (features.size() != size() * dim() || pool.size() != size() || ids.size() != size())
      throw DataError("dataset " + std::to_string(domain) + ": column lengths disagree");
    for (auto y : labels)
      if (y >= classes) throw DataError("dataset " + std::to_string(domain) + ": label out of range");
  }
};

/// Fraction of training-unlabeled samples whose class has no labeled sample in
/// the same domain (0 when the domain has no unlabeled samples).
inline double extra_class_fraction(const DomainDataset& d) {
  const auto known = d.labeled_classes();
  std::size_t unl = 0, extra = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.pool[i] == Pool::unlabeled) {
      ++unl;
      if (!known.count(d.labels[i])) ++extra;
    }
  return unl ? static_cast<double>(extra) / static_cast<double>(unl) : 0.0;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian domains
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t domains = 2;
  std::size_t classes = 4;
  std::size_t samples_per_class = 200;
  /// Translation of domain i's clusters is i * shift along the x axis.
  double shift = 0.0;
  /// Rotation (radians) of domain i's cluster layout is i * rotation.
  double rotation = 0.0;
  /// Isotropic cluster covariance is cov_scale * I.
  double cov_scale = 0.25;
  /// Class k sits at radius * (cos 2pi k/L, sin 2pi k/L) before the domain transform.
  double radius = 3.0;
};

/// Mean of class k in domain i.
inline std::array<double, 2> synth_class_mean(const SynthSpec& s, std::size_t domain, std::size_t k) {
  const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(s.classes);
  const double x = s.radius * std::cos(a), y = s.radius * std::sin(a);
  const double r = s.rotation * static_cast<double>(domain);
  return {std::cos(r) * x - std::sin(r) * y + s.shift * static_cast<double>(domain),
          std::sin(r) * x + std::cos(r) * y};
}

/// Gaussian class clusters in the plane, one dataset per domain, all samples
/// labeled. Sample ids are domain * 2^32 + index.
inline std::vector<DomainDataset> synth_domains(const SynthSpec& s, std::uint64_t seed) {
  if (s.classes < 2) throw std::invalid_argument("synth_domains: need at least 2 classes");
  if (s.domains < 1) throw std::invalid_argument("synth_domains: need at least 1 domain");
  if (s.samples_per_class == 0) throw std::invalid_argument("synth_domains: samples per class must be positive");
  if (!(s.cov_scale > 0.0)) throw std::invalid_argument("synth_domains: covariance scale must be positive");
  if (!std::isfinite(s.shift) || !std::isfinite(s.rotation))
    throw std::invalid_argument("synth_domains: shift and rotation must be finite");
  std::vector<DomainDataset> out;
  const double sd = std::sqrt(s.cov_scale);
  for (std::size_t i = 0; i < s.domains; ++i) {
    auto rng = make_rng(seed, 1000 + i);
    std::normal_distribution<double> noise(0.0, sd);
    DomainDataset d;
    d.domain = i;
    d.sample_shape = {2};
    d.classes = s.classes;
    std::ostringstream prov;
    prov << "synth seed=" << seed << " domains=" << s.domains << " classes=" << s.classes
         << " per_class=" << s.samples_per_class << " shift=" << s.shift << " rotation=" << s.rotation
         << " cov=" << s.cov_scale;
    d.provenance = prov.str();
    for (std::size_t k = 0; k < s.classes; ++k) {
      const auto mu = synth_class_mean(s, i, k);
      for (std::size_t j = 0; j < s.samples_per_class; ++j) {
        const double x[2] = {mu[0] + noise(rng), mu[1] + noise(rng)};
        d.push(x, k, Pool::labeled, (static_cast<std::uint64_t>(i) << 32) | d.size());
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Semi-supervised splits
// ---------------------------------------------------------------------------

struct SplitSpec {
  /// Fraction of classes labeled in every domain but the first.
  double labeled_class_fraction = 0.5;
  /// Labeled samples per labeled class in those domains.
  std::size_t labeled_per_class = 10;
  /// Per-class fraction of the fully labeled domain held out for evaluation.
  double test_fraction = 0.3;
  EvalSetting setting = EvalSetting::ft;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> by_class(const DomainDataset& d) {
  std::vector<std::vector<std::size_t>> out(d.classes);
  for (std::size_t i = 0; i < d.size(); ++i) out[d.labels[i]].push_back(i);
  return out;
}

inline void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) { std::shuffle(v.begin(), v.end(), rng); }

/// Fully labeled domain: per class, a held-out share, the rest labeled.
inline void split_fully_labeled(DomainDataset& d, double test_fraction, std::mt19937_64& rng) {
  for (auto& members : by_class(d)) {
    shuffle(members, rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    for (std::size_t j = 0; j < members.size(); ++j) d.pool[members[j]] = j < n_test ? Pool::held_out : Pool::labeled;
  }
}

/// NFT: half of every class's unlabeled samples move to the held-out pool.
inline void hold_out_unlabeled(DomainDataset& d, std::mt19937_64& rng) {
  for (auto& members : by_class(d)) {
    std::vector<std::size_t> unl;
    for (auto i : members)
      if (d.pool[i] == Pool::unlabeled) unl.push_back(i);
    shuffle(unl, rng);
    for (std::size_t j = 0; j < unl.size() / 2; ++j) d.pool[unl[j]] = Pool::held_out;
  }
}

}  // namespace detail

/// Domain 0 becomes fully labeled (minus a held-out test share). Every other
/// domain gets `labeled_per_class` labeled samples on a seeded subset of
/// ceil(fraction * L) classes; all its remaining samples are unlabeled. Under
/// NFT half of each class's unlabeled samples are held out from training.
inline std::vector<DomainDataset> semi_supervised_split(std::vector<DomainDataset> data, const SplitSpec& spec,
                                                        std::uint64_t seed) {
  if (data.size() < 2) throw std::invalid_argument("semi_supervised_split: need at least 2 domains");
  if (!(spec.labeled_class_fraction >= 0.0 && spec.labeled_class_fraction <= 1.0))
    throw std::invalid_argument("semi_supervised_split: labeled-class fraction must lie in [0,1]");
  if (!(spec.test_fraction >= 0.0 && spec.test_fraction < 1.0))
    throw std::invalid_argument("semi_supervised_split: test fraction must lie in [0,1)");
  auto rng = make_rng(seed, 2000);
  detail::split_fully_labeled(data[0], spec.test_fraction, rng);
  for (std::size_t i = 1; i < data.size(); ++i) {
    DomainDataset& d = data[i];
    auto members = detail::by_class(d);
    std::vector<std::size_t> present;
    for (std::size_t k = 0; k < d.classes; ++k)
      if (!members[k].empty()) present.push_back(k);
    detail::shuffle(present, rng);
    const auto n_lab = static_cast<std::size_t>(
        std::ceil(spec.labeled_class_fraction * static_cast<double>(present.size()) - 1e-9));
    std::set<std::size_t> lab(present.begin(), present.begin() + static_cast<std::ptrdiff_t>(n_lab));
    for (std::size_t k = 0; k < d.classes; ++k) {
      auto& m = members[k];
      if (lab.count(k) && spec.labeled_per_class > m.size())
        throw std::invalid_argument("semi_supervised_split: class " + std::to_string(k) + " of domain " +
                                    std::to_string(i) + " has " + std::to_string(m.size()) + " samples, " +
                                    std::to_string(spec.labeled_per_class) + " labeled requested");
      detail::shuffle(m, rng);
      for (std::size_t j = 0; j < m.size(); ++j)
        d.pool[m[j]] = (lab.count(k) && j < spec.labeled_per_class) ? Pool::labeled : Pool::unlabeled;
    }
    if (spec.setting == EvalSetting::nft) detail::hold_out_unlabeled(d, rng);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Class-asymmetry cases
// ---------------------------------------------------------------------------

/// Class roles: alpha labeled in both domains, beta labeled in domain 1 and
/// unlabeled in domain 2, gamma labeled only in domain 1, delta unlabeled only
/// in domain 2.
struct ClassRoles {
  std::vector<std::size_t> alpha{0, 1};
  std::vector<std::size_t> beta{2, 3};
  std::vector<std::size_t> gamma{4};
  std::vector<std::size_t> delta{5};
};

struct AsymmetryCase {
  int id = 1;
  ClassRoles roles;
  /// Realized fraction of domain 2's unlabeled samples with no labeled class counterpart.
  double p_star = 0.0;
  std::vector<DomainDataset> datasets;
};

inline bool case_has_gamma(int id) { return id == 2 || id == 4; }
inline bool case_has_delta(int id) { return id == 3 || id == 4; }

/// Realizes one of the four class-content cases on two base domains.
/// Domain 1 holds labeled alpha, beta (and gamma in cases 2, 4), minus a
/// held-out test share. Domain 2 holds alpha with `labeled_per_class` labeled
/// samples per class and the rest unlabeled, unlabeled beta, and unlabeled
/// delta in cases 3, 4. Classes without a role are dropped.
///
/// A positive `target_p_star` subsamples domain 2's unlabeled pool (dropping
/// known-class or extra-class samples as needed) to approach that fraction.
inline AsymmetryCase build_asymmetry_case(const std::vector<DomainDataset>& base, int case_id, const ClassRoles& roles,
                                          const SplitSpec& split, std::uint64_t seed, double target_p_star = -1.0) {
  if (case_id < 1 || case_id > 4) throw std::invalid_argument("asymmetry case must be 1..4, got " + std::to_string(case_id));
  if (base.size() != 2) throw std::invalid_argument("asymmetry cases need exactly 2 base domains");
  if (roles.alpha.empty() || roles.beta.empty())
    throw std::invalid_argument("asymmetry cases need at least one alpha and one beta class");
  if ((case_has_gamma(case_id) && roles.gamma.empty()) || (case_has_delta(case_id) && roles.delta.empty()))
    throw std::invalid_argument("asymmetry case " + std::to_string(case_id) + " needs orphan classes");
  std::set<std::size_t> seen;
  for (const auto* group : {&roles.alpha, &roles.beta, &roles.gamma, &roles.delta})
    for (auto c : *group) {
      if (c >= base[0].classes || c >= base[1].classes)
        throw std::invalid_argument("asymmetry roles: class " + std::to_string(c) + " exceeds available classes");
      if (!seen.insert(c).second) throw std::invalid_argument("asymmetry roles overlap on class " + std::to_string(c));
    }
  if (target_p_star > 1.0) throw std::invalid_argument("target p* must lie in (0,1]");

  auto rng = make_rng(seed, 3000 + static_cast<std::uint64_t>(case_id));
  std::set<std::size_t> keep1(roles.alpha.begin(), roles.alpha.end());
  keep1.insert(roles.beta.begin(), roles.beta.end());
  if (case_has_gamma(case_id)) keep1.insert(roles.gamma.begin(), roles.gamma.end());
  std::set<std::size_t> alpha(roles.alpha.begin(), roles.alpha.end());
  std::set<std::size_t> keep2(alpha);
  keep2.insert(roles.beta.begin(), roles.beta.end());
  if (case_has_delta(case_id)) keep2.insert(roles.delta.begin(), roles.delta.end());

  auto filter = [](const DomainDataset& src, const std::set<std::size_t>& keep) {
    DomainDataset d = src;
    d.features.clear();
    d.labels.clear();
    d.pool.clear();
    d.ids.clear();
    for (std::size_t i = 0; i < src.size(); ++i)
      if (keep.count(src.labels[i])) d.push(src.row(i), src.labels[i], Pool::labeled, src.ids[i]);
    return d;
  };
  DomainDataset d1 = filter(base[0], keep1);
  DomainDataset d2 = filter(base[1], keep2);
  d1.domain = 0;
  d2.domain = 1;
  detail::split_fully_labeled(d1, split.test_fraction, rng);

  auto members = detail::by_class(d2);
  for (std::size_t k = 0; k < d2.classes; ++k) {
    auto& m = members[k];
    if (m.empty()) continue;
    if (alpha.count(k) && split.labeled_per_class > m.size())
      throw std::invalid_argument("asymmetry: alpha class " + std::to_string(k) + " has only " +
                                  std::to_string(m.size()) + " samples");
    detail::shuffle(m, rng);
    for (std::size_t j = 0; j < m.size(); ++j)
      d2.pool[m[j]] = (alpha.count(k) && j < split.labeled_per_class) ? Pool::labeled : Pool::unlabeled;
  }

  if (target_p_star > 0.0) {
    std::vector<std::size_t> known, extra;
    for (std::size_t i = 0; i < d2.size(); ++i)
      if (d2.pool[i] == Pool::unlabeled) (alpha.count(d2.labels[i]) ? known : extra).push_back(i);
    std::set<std::size_t> drop;
    const double K = static_cast<double>(known.size()), E = static_cast<double>(extra.size());
    if (E > 0 && E / (K + E) < target_p_star) {
      const auto keep_known = static_cast<std::size_t>(std::llround(E * (1.0 - target_p_star) / target_p_star));
      detail::shuffle(known, rng);
      for (std::size_t j = keep_known; j < known.size(); ++j) drop.insert(known[j]);
    } else if (E > 0 && target_p_star < 1.0) {
      const auto keep_extra = static_cast<std::size_t>(std::llround(K * target_p_star / (1.0 - target_p_star)));
      detail::shuffle(extra, rng);
      for (std::size_t j = keep_extra; j < extra.size(); ++j) drop.insert(extra[j]);
    }
    if (!drop.empty()) {
      DomainDataset kept = d2;
      kept.features.clear();
      kept.labels.clear();
      kept.pool.clear();
      kept.ids.clear();
      for (std::size_t i = 0; i < d2.size(); ++i)
        if (!drop.count(i)) kept.push(d2.row(i), d2.labels[i], d2.pool[i], d2.ids[i]);
      d2 = std::move(kept);
    }
  }
  AsymmetryCase out;
  out.id = case_id;
  out.roles = roles;
  out.p_star = extra_class_fraction(d2);
  if (split.setting == EvalSetting::nft) detail::hold_out_unlabeled(d2, rng);
  d1.provenance = base[0].provenance + " case=" + std::to_string(case_id);
  d2.provenance = base[1].provenance + " case=" + std::to_string(case_id);
  out.datasets = {std::move(d1), std::move(d2)};
  return out;
}

// ---------------------------------------------------------------------------
// IDX ingestion and the colorized-digits domain
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::uint32_t be32(const std::string& b, std::size_t off, const std::string& path) {
  if (b.size() < off + 4) throw DataError(path + ": truncated header at byte " + std::to_string(off));
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
  return v;
}

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

}  // namespace detail

/// Parses an IDX image file (magic 0x00000803) and label file (magic
/// 0x00000801). Pixels are scaled to [0,1]; every sample is labeled.
inline DomainDataset load_idx(const std::string& images_path, const std::string& labels_path,
                              std::size_t domain = 0) {
  const std::string img = detail::read_file(images_path);
  const std::string lab = detail::read_file(labels_path);
  const auto im = detail::be32(img, 0, images_path);
  if (im != kIdxImageMagic)
    throw DataError(images_path + ": bad image magic " + detail::hex32(im) + " at byte 0");
  const auto lm = detail::be32(lab, 0, labels_path);
  if (lm != kIdxLabelMagic)
    throw DataError(labels_path + ": bad label magic " + detail::hex32(lm) + " at byte 0");
  const std::size_t n = detail::be32(img, 4, images_path);
  const std::size_t rows = detail::be32(img, 8, images_path);
  const std::size_t cols = detail::be32(img, 12, images_path);
  const std::size_t nl = detail::be32(lab, 4, labels_path);
  if (n != nl)
    throw DataError(images_path + ": " + std::to_string(n) + " images but " + labels_path + " has " +
                    std::to_string(nl) + " labels");
  if (rows == 0 || cols == 0) throw DataError(images_path + ": zero image dimension at byte 8");
  const std::size_t img_need = 16 + n * rows * cols;
  if (img.size() < img_need)
    throw DataError(images_path + ": payload truncated at byte " + std::to_string(img.size()) + ", expected " +
                    std::to_string(img_need));
  if (lab.size() < 8 + n)
    throw DataError(labels_path + ": payload truncated at byte " + std::to_string(lab.size()) + ", expected " +
                    std::to_string(8 + n));
  DomainDataset d;
  d.domain = domain;
  d.sample_shape = {1, rows, cols};
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) max_label = std::max<std::size_t>(max_label, static_cast<unsigned char>(lab[8 + i]));
  d.classes = std::max<std::size_t>(max_label + 1, 2);
  d.features.reserve(n * rows * cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < rows * cols; ++p)
      d.features.push_back(static_cast<unsigned char>(img[16 + i * rows * cols + p]) / 255.0);
    d.labels.push_back(static_cast<unsigned char>(lab[8 + i]));
    d.pool.push_back(Pool::labeled);
    d.ids.push_back((static_cast<std::uint64_t>(domain) << 32) | i);
  }
  d.provenance = "idx " + images_path + " + " + labels_path;
  return d;
}

/// Writes an IDX pair; used to produce fixtures and exports.
inline void write_idx(const std::string& images_path, const std::string& labels_path,
                      const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels,
                      std::uint32_t rows, std::uint32_t cols) {
  auto put = [](std::ofstream& f, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    f.write(b, 4);
  };
  std::ofstream fi(images_path, std::ios::binary), fl(labels_path, std::ios::binary);
  if (!fi || !fl) throw DataError("cannot write IDX files");
  put(fi, kIdxImageMagic);
  put(fi, static_cast<std::uint32_t>(labels.size()));
  put(fi, rows);
  put(fi, cols);
  fi.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  put(fl, kIdxLabelMagic);
  put(fl, static_cast<std::uint32_t>(labels.size()));
  fl.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

/// Replicates a single-channel image dataset into three channels.
inline DomainDataset to_rgb(const DomainDataset& gray) {
  if (gray.sample_shape.size() != 3 || gray.sample_shape[0] != 1)
    throw std::invalid_argument("to_rgb: expects {1,H,W} samples, got " + shape_str(gray.sample_shape));
  DomainDataset d = gray;
  const std::size_t plane = gray.dim();
  d.sample_shape = {3, gray.sample_shape[1], gray.sample_shape[2]};
  d.features.assign(gray.size() * 3 * plane, 0.0);
  for (std::size_t i = 0; i < gray.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) std::copy_n(gray.row(i), plane, &d.features[(i * 3 + c) * plane]);
  return d;
}

/// Surrogate for a blended-background digits domain: each grayscale digit is
/// composited onto a random background colour with per-pixel noise as
/// |background - digit|, giving a three-channel image with the same label.
inline DomainDataset colorize_digits(const DomainDataset& gray, std::uint64_t seed, std::size_t domain = 1) {
  if (gray.sample_shape.size() != 3 || gray.sample_shape[0] != 1)
    throw std::invalid_argument("colorize_digits: expects grayscale {1,H,W} samples, got " + shape_str(gray.sample_shape));
  auto rng = make_rng(seed, 4000);
  std::uniform_real_distribution<double> colour(0.0, 1.0), jitter(-0.15, 0.15);
  DomainDataset d = gray;
  d.domain = domain;
  const std::size_t plane = gray.dim();
  d.sample_shape = {3, gray.sample_shape[1], gray.sample_shape[2]};
  d.features.assign(gray.size() * 3 * plane, 0.0);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double bg[3] = {colour(rng), colour(rng), colour(rng)};
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const double b = std::clamp(bg[c] + jitter(rng), 0.0, 1.0);
        d.features[(i * 3 + c) * plane + p] = std::abs(b - gray.row(i)[p]);
      }
    d.ids[i] = (static_cast<std::uint64_t>(domain) << 32) | (d.ids[i] & 0xffffffffu);
  }
  d.provenance = gray.provenance + " colorized seed=" + std::to_string(seed);
  return d;
}

// ---------------------------------------------------------------------------
// Columnar text format
// ---------------------------------------------------------------------------
//
//   # mulann-dataset v1 classes=<L> shape=<d0>x<d1>...
//   domain,class,labeled,pool,x0,x1,...
//   <one row per sample; features printed with 17 significant digits>

inline void write_datasets(std::ostream& os, const std::vector<DomainDataset>& data) {
  if (data.empty()) return;
  const auto& s = data.front().sample_shape;
  os << "# mulann-dataset v1 classes=" << data.front().classes << " shape=";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "\ndomain,class,labeled,pool";
  for (std::size_t k = 0; k < data.front().dim(); ++k) os << ",x" << k;
  os << '\n';
  os << std::setprecision(17);
  for (const auto& d : data)
    for (std::size_t i = 0; i < d.size(); ++i) {
      os << d.domain << ',' << d.labels[i] << ',' << (d.is_labeled(i) ? 1 : 0) << ',' << pool_name(d.pool[i]);
      for (std::size_t k = 0; k < d.dim(); ++k) os << ',' << d.row(i)[k];
      os << '\n';
    }
}

inline std::vector<DomainDataset> read_datasets(std::istream& is) {
  std::string header, columns, line;
  if (!std::getline(is, header) || header.rfind("# mulann-dataset v1", 0) != 0)
    throw DataError("dataset text: missing '# mulann-dataset v1' header");
  std::size_t classes = 0;
  Shape shape;
  {
    std::istringstream hs(header.substr(19));
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("classes=", 0) == 0) classes = std::stoul(tok.substr(8));
      if (tok.rfind("shape=", 0) == 0) {
        std::istringstream ds(tok.substr(6));
        std::string d;
        while (std::getline(ds, d, 'x')) shape.push_back(std::stoul(d));
      }
    }
  }
  if (classes == 0 || shape.empty()) throw DataError("dataset text: header lacks classes/shape");
  std::getline(is, columns);
  std::vector<DomainDataset> out;
  std::size_t lineno = 2;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4 + shape_numel(shape))
      throw DataError("dataset text: line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) + " cells");
    const std::size_t dom = std::stoul(cells[0]);
    while (out.size() <= dom) {
      DomainDataset d;
      d.domain = out.size();
      d.sample_shape = shape;
      d.classes = classes;
      d.provenance = "text";
      out.push_back(std::move(d));
    }
    Pool p = cells[3] == "labeled" ? Pool::labeled : cells[3] == "unlabeled" ? Pool::unlabeled : Pool::held_out;
    if (cells[3] != pool_name(p)) throw DataError("dataset text: bad pool on line " + std::to_string(lineno));
    std::vector<double> x(shape_numel(shape));
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::stod(cells[4 + k]);
    auto& d = out[dom];
    d.push(x.data(), std::stoul(cells[1]), p, (static_cast<std::uint64_t>(dom) << 32) | d.size());
  }
  return out;
}

}  // namespace mulann
