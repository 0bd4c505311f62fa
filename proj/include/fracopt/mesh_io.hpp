#pragma once

#include "fracopt/mesh.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fracopt {

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Plain-text mesh format: header `nv nt nb`, then vertex lines `x y flag`,
/// then triangle lines `i j k region` with region in {omega, band}.
/// Coordinates round-trip exactly through 17 significant digits.
inline void write_mesh(std::ostream& os, const TriMesh& mesh) {
  os << mesh.n_vertices() << ' ' << mesh.triangles.size() << ' ' << mesh.band_triangles.size()
     << '\n';
  for (int v = 0; v < mesh.n_vertices(); ++v)
    os << detail::fmt17(mesh.vertices[v].x()) << ' ' << detail::fmt17(mesh.vertices[v].y()) << ' '
       << (mesh.boundary_vertex_flags[v] ? 1 : 0) << '\n';
  for (const auto& t : mesh.triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << " omega\n";
  for (const auto& t : mesh.band_triangles) os << t[0] << ' ' << t[1] << ' ' << t[2] << " band\n";
}

inline TriMesh read_mesh(std::istream& is) {
  TriMesh m;
  size_t nv = 0, nt = 0, nb = 0;
  if (!(is >> nv >> nt >> nb)) throw std::runtime_error("mesh read: bad header");
  m.vertices.resize(nv);
  m.boundary_vertex_flags.resize(nv);
  for (size_t v = 0; v < nv; ++v) {
    double x, y;
    int flag;
    if (!(is >> x >> y >> flag)) throw std::runtime_error("mesh read: bad vertex line");
    m.vertices[v] = {x, y};
    m.boundary_vertex_flags[v] = flag != 0;
  }
  auto read_tri = [&](std::vector<std::array<int, 3>>& dst, const char* want) {
    std::array<int, 3> t{};
    std::string region;
    if (!(is >> t[0] >> t[1] >> t[2] >> region) || region != want)
      throw std::runtime_error("mesh read: bad triangle line");
    for (int i : t)
      if (i < 0 || static_cast<size_t>(i) >= nv) throw std::runtime_error("mesh read: bad index");
    dst.push_back(t);
  };
  for (size_t i = 0; i < nt; ++i) read_tri(m.triangles, "omega");
  for (size_t i = 0; i < nb; ++i) read_tri(m.band_triangles, "band");

  double r = 0.0;
  for (const auto& t : m.band_triangles)
    for (int v : t) r = std::max(r, m.vertices[v].norm());
  m.band_radius = r;
  m.h = detail::compute_h(m);
  return m;
}

inline void write_mesh_file(const std::string& path, const TriMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open mesh file for writing: " + path);
  write_mesh(os, mesh);
}

inline TriMesh read_mesh_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open mesh file: " + path);
  return read_mesh(is);
}

using Fingerprint = std::array<std::uint8_t, 32>;

/// SHA-256 over a canonical little-endian byte stream of the mesh data.
/// Ties cached operator matrices to the exact geometry they were built from.
inline Fingerprint mesh_fingerprint(const TriMesh& mesh) {
  static_assert(std::endian::native == std::endian::little);
  std::string bytes;
  auto put = [&bytes](const void* p, size_t n) {
    bytes.append(static_cast<const char*>(p), n);
  };
  const char magic[8] = {'F', 'R', 'A', 'C', 'M', 'E', 'S', 'H'};
  put(magic, 8);
  const std::uint64_t counts[3] = {mesh.vertices.size(), mesh.triangles.size(),
                                   mesh.band_triangles.size()};
  put(counts, sizeof(counts));
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const double xy[2] = {mesh.vertices[v].x(), mesh.vertices[v].y()};
    put(xy, sizeof(xy));
    const std::uint8_t f = mesh.boundary_vertex_flags[v] ? 1 : 0;
    put(&f, 1);
  }
  auto put_tris = [&](const std::vector<std::array<int, 3>>& tris, std::uint8_t tag) {
    for (const auto& t : tris) {
      const std::uint32_t idx[3] = {static_cast<std::uint32_t>(t[0]),
                                    static_cast<std::uint32_t>(t[1]),
                                    static_cast<std::uint32_t>(t[2])};
      put(idx, sizeof(idx));
      put(&tag, 1);
    }
  };
  put_tris(mesh.triangles, 0);
  put_tris(mesh.band_triangles, 1);

  Fingerprint out{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr);
  return out;
}

inline std::string fingerprint_hex(const Fingerprint& fp) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : fp) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xf]);
  }
  return s;
}

}  // namespace fracopt
