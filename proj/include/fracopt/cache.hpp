#pragma once

#include "fracopt/assembly.hpp"
#include "fracopt/mesh_io.hpp"
#include "fracopt/solvers.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace fracopt {

/// Cache file layout, little-endian throughout:
///   magic "FRAC1" | d u32 | s f64 | n_dofs u32 | fingerprint 32B | quad 2xu32
/// followed by the row-major upper triangle of A as IEEE-754 doubles.
namespace cache_detail {

constexpr char kMagic[5] = {'F', 'R', 'A', 'C', '1'};

struct Header {
  std::uint32_t d = 2;
  double s = 0.0;
  std::uint32_t n_dofs = 0;
  Fingerprint fp{};
  std::uint32_t quad_regular = 0;
  std::uint32_t quad_duffy = 0;
};

}  // namespace cache_detail

inline std::string stiffness_cache_filename(const Fingerprint& fp, double s,
                                            const QuadratureConfig& quad) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "_s%016llx_q%d-%d.bin",
                static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(s)),
                quad.gauss_order_regular, quad.duffy_order_singular);
  return "A_" + fingerprint_hex(fp).substr(0, 16) + buf;
}

inline void save_stiffness_cache(const std::string& path, const OperatorSet& ops) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open cache file for writing: " + path);
  os.write(cache_detail::kMagic, 5);
  const std::uint32_t d = 2, n = static_cast<std::uint32_t>(ops.A.rows());
  const std::uint32_t qr = ops.quad.gauss_order_regular, qd = ops.quad.duffy_order_singular;
  os.write(reinterpret_cast<const char*>(&d), 4);
  os.write(reinterpret_cast<const char*>(&ops.s), 8);
  os.write(reinterpret_cast<const char*>(&n), 4);
  os.write(reinterpret_cast<const char*>(ops.mesh_fingerprint.data()), 32);
  os.write(reinterpret_cast<const char*>(&qr), 4);
  os.write(reinterpret_cast<const char*>(&qd), 4);
  for (int i = 0; i < ops.A.rows(); ++i)
    for (int j = i; j < ops.A.cols(); ++j) {
      const double v = ops.A(i, j);
      os.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!os) throw std::runtime_error("cache write failed: " + path);
}

/// Loads A if and only if every header field matches; a mismatch of any kind
/// reports a miss so the caller reassembles.
inline bool load_stiffness_cache(const std::string& path, const Fingerprint& fp, double s,
                                 int n_dofs, const QuadratureConfig& quad, Eigen::MatrixXd& A) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[5];
  cache_detail::Header h;
  is.read(magic, 5);
  is.read(reinterpret_cast<char*>(&h.d), 4);
  is.read(reinterpret_cast<char*>(&h.s), 8);
  is.read(reinterpret_cast<char*>(&h.n_dofs), 4);
  is.read(reinterpret_cast<char*>(h.fp.data()), 32);
  is.read(reinterpret_cast<char*>(&h.quad_regular), 4);
  is.read(reinterpret_cast<char*>(&h.quad_duffy), 4);
  if (!is || std::memcmp(magic, cache_detail::kMagic, 5) != 0) return false;
  if (h.d != 2 || std::bit_cast<std::uint64_t>(h.s) != std::bit_cast<std::uint64_t>(s))
    return false;
  if (h.n_dofs != static_cast<std::uint32_t>(n_dofs) || h.fp != fp) return false;
  if (h.quad_regular != static_cast<std::uint32_t>(quad.gauss_order_regular) ||
      h.quad_duffy != static_cast<std::uint32_t>(quad.duffy_order_singular))
    return false;

  A.resize(n_dofs, n_dofs);
  for (int i = 0; i < n_dofs; ++i)
    for (int j = i; j < n_dofs; ++j) {
      double v;
      is.read(reinterpret_cast<char*>(&v), 8);
      if (!is) return false;
      A(i, j) = v;
      A(j, i) = v;
    }
  return true;
}

/// Assembles the operator set, or loads A from the cache directory when an
/// entry keyed by (mesh fingerprint, s, quadrature orders) exists.
inline OperatorSet assemble_or_load(const Discretization& d, double s,
                                    const AssemblyOptions& opts, const std::string& cache_dir,
                                    bool* from_cache = nullptr) {
  const Fingerprint fp = mesh_fingerprint(d.mesh);
  const std::filesystem::path file =
      std::filesystem::path(cache_dir) / stiffness_cache_filename(fp, s, opts.quad);

  Eigen::MatrixXd A;
  if (!cache_dir.empty() &&
      load_stiffness_cache(file.string(), fp, s, d.dofmap.n_dofs, opts.quad, A)) {
    OperatorSet ops;
    ops.A = std::move(A);
    ops.M = assemble_mass(d.mesh, d.dofmap);
    ops.s = s;
    ops.c_ds = normalization_constant(2, s);
    ops.mesh_fingerprint = fp;
    ops.quad = opts.quad;
    if (from_cache) *from_cache = true;
    return ops;
  }

  OperatorSet ops = assemble_fractional_stiffness(d.mesh, d.dofmap, s, opts);
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    save_stiffness_cache(file.string(), ops);
  }
  if (from_cache) *from_cache = false;
  return ops;
}

}  // namespace fracopt
