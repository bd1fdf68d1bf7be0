#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <locale>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "copositivity.hpp"
#include "types.hpp"

namespace hmmbounds {

// ---------------------------------------------------------------------------
// Plain-text persistence: CSV matrices (one row per line, '.' decimal, no
// header), line-oriented key-value files for model descriptions and run
// manifests, and audit files for copositive-order certificates. All numbers
// are written with 17 significant digits so that doubles round-trip exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string trim(std::string_view s) {
  const char* ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return std::string();
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double_token(const std::string& token) {
  double out = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last)
    throw IoError("not a number: '" + token + "'");
  return out;
}

inline long long parse_int_token(const std::string& token) {
  long long out = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last)
    throw IoError("not an integer: '" + token + "'");
  return out;
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw IoError("cannot open for writing: " + path.string());
  return out;
}

inline std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open for reading: " + path.string());
  return in;
}

}  // namespace detail

// Whole file as a byte string.
inline std::string slurp_file(const std::filesystem::path& path) {
  std::ifstream in = detail::open_for_read(path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Strict space-separated list of doubles ("1 2.5 -3e2").
inline std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream is(text);
  std::string token;
  while (is >> token) out.push_back(detail::parse_double_token(token));
  return out;
}

// ---------------------------------------------------------------------------
// CSV matrices and vectors
// ---------------------------------------------------------------------------

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0)
    throw DimensionMismatch("csv: refusing to write an empty matrix");
  std::ofstream out = detail::open_for_write(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << detail::format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out.good()) throw IoError("write failed: " + path.string());
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in = detail::open_for_read(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string token =
          detail::trim(line.substr(start, comma == std::string::npos
                                              ? std::string::npos
                                              : comma - start));
      row.push_back(detail::parse_double_token(token));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw IoError("csv: ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("csv: no data in " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

// One value per line (a single CSV column).
inline void write_vector_csv(const std::filesystem::path& path, const Vector& v) {
  if (v.size() == 0)
    throw DimensionMismatch("csv: refusing to write an empty vector");
  std::ofstream out = detail::open_for_write(path);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    out << detail::format_double(v[i]) << '\n';
  if (!out.good()) throw IoError("write failed: " + path.string());
}

// Accepts either a single column or a single row.
inline Vector read_vector_csv(const std::filesystem::path& path) {
  const Matrix m = read_matrix_csv(path);
  if (m.cols() == 1) return m.col(0);
  if (m.rows() == 1) return m.row(0).transpose();
  throw IoError("csv: expected a single row or column in " + path.string());
}

// ---------------------------------------------------------------------------
// Line-oriented key-value files: '#' starts a comment line, blank lines are
// skipped, the key runs to the first whitespace, the value is the trimmed
// remainder of the line (and may itself contain spaces).
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> read_key_value_file(
    const std::filesystem::path& path) {
  std::ifstream in = detail::open_for_read(path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::size_t sep = t.find_first_of(" \t");
    if (sep == std::string::npos) {
      out.emplace_back(t, std::string());
    } else {
      out.emplace_back(t.substr(0, sep), detail::trim(t.substr(sep + 1)));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model files. Keys:
//   states         <int>                 state count X (required)
//   transition     <csv path>            row-stochastic X x X matrix (required)
//   symbols        <int>                 alphabet size Y   } finite-alphabet
//   observation    <csv path>            X x Y likelihoods } models
//   gaussian_sigma <double>              noise std dev     } additive-Gaussian
//   levels         <X doubles>           per-state means   } models
//   weights        <X doubles>           state levels g (optional, default 1..X)
// Exactly one of {observation, gaussian_sigma} must be present. Relative CSV
// paths are resolved against the model file's directory.
// ---------------------------------------------------------------------------

inline void write_model(const std::filesystem::path& model_path,
                        const HmmModel& model,
                        const std::string& transition_csv = "P.csv",
                        const std::string& observation_csv = "B.csv") {
  const std::filesystem::path dir = model_path.parent_path();
  write_matrix_csv(dir / transition_csv, model.P.dense());

  std::ofstream out = detail::open_for_write(model_path);
  out << "states " << model.P.size() << '\n';
  if (model.obs.is_discrete()) {
    write_matrix_csv(dir / observation_csv, Matrix(model.obs.likelihood_matrix()));
    out << "symbols " << model.obs.symbol_count() << '\n';
    out << "transition " << transition_csv << '\n';
    out << "observation " << observation_csv << '\n';
  } else {
    out << "transition " << transition_csv << '\n';
    out << "gaussian_sigma " << detail::format_double(model.obs.sigma()) << '\n';
    out << "levels";
    for (Eigen::Index i = 0; i < model.obs.levels().size(); ++i)
      out << ' ' << detail::format_double(model.obs.levels()[i]);
    out << '\n';
  }
  out << "weights";
  for (Eigen::Index i = 0; i < model.g.size(); ++i)
    out << ' ' << detail::format_double(model.g[i]);
  out << '\n';
  if (!out.good()) throw IoError("write failed: " + model_path.string());
}

inline HmmModel read_model(const std::filesystem::path& model_path) {
  static const char* known[] = {"states",      "symbols", "transition",
                                "observation", "gaussian_sigma",
                                "levels",      "weights"};
  std::map<std::string, std::string> kv;
  for (const auto& [key, value] : read_key_value_file(model_path)) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw IoError("model: unknown key '" + key + "'");
    if (!kv.emplace(key, value).second)
      throw IoError("model: duplicate key '" + key + "'");
  }
  const auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  const std::string* states = get("states");
  const std::string* transition = get("transition");
  if (!states) throw IoError("model: missing 'states'");
  if (!transition || transition->empty())
    throw IoError("model: missing 'transition'");
  const long long X = detail::parse_int_token(*states);

  const std::filesystem::path dir = model_path.parent_path();
  const auto resolve = [&](const std::string& name) {
    const std::filesystem::path p(name);
    return p.is_relative() ? dir / p : p;
  };
  TransitionMatrix P =
      TransitionMatrix::from_matrix(read_matrix_csv(resolve(*transition)));
  if (P.size() != X)
    throw DimensionMismatch("model: 'states' disagrees with the transition csv");

  const std::string* observation = get("observation");
  const std::string* sigma = get("gaussian_sigma");
  if (static_cast<bool>(observation) == static_cast<bool>(sigma))
    throw IoError("model: need exactly one of 'observation' and 'gaussian_sigma'");

  ObservationModel obs = [&] {
    if (observation) {
      if (get("levels")) throw IoError("model: 'levels' requires 'gaussian_sigma'");
      const std::string* symbols = get("symbols");
      if (!symbols) throw IoError("model: 'observation' requires 'symbols'");
      const Matrix B = read_matrix_csv(resolve(*observation));
      if (B.cols() != detail::parse_int_token(*symbols))
        throw DimensionMismatch("model: 'symbols' disagrees with the observation csv");
      return ObservationModel::discrete(B);
    }
    if (get("symbols")) throw IoError("model: 'symbols' requires 'observation'");
    const std::string* levels = get("levels");
    if (!levels) throw IoError("model: 'gaussian_sigma' requires 'levels'");
    const std::vector<double> xs = parse_double_list(*levels);
    Vector lv(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
      lv[static_cast<Eigen::Index>(i)] = xs[i];
    return ObservationModel::gaussian(std::move(lv),
                                      detail::parse_double_token(*sigma));
  }();

  Vector g;
  if (const std::string* weights = get("weights")) {
    const std::vector<double> xs = parse_double_list(*weights);
    g.resize(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
      g[static_cast<Eigen::Index>(i)] = xs[i];
  }
  return HmmModel::make(std::move(P), std::move(obs), std::move(g));
}

// ---------------------------------------------------------------------------
// Copositive-order certificate audit files: per family member, the simplicial
// partition's vertices and the minimum entry of V'MV on each cell, plus the
// witness point for refutations.
// ---------------------------------------------------------------------------

namespace detail {

inline const char* status_name(CopositivityStatus s) {
  switch (s) {
    case CopositivityStatus::Certified: return "certified";
    case CopositivityStatus::Refuted: return "refuted";
    default: return "unknown";
  }
}

inline CopositivityStatus status_from_name(const std::string& name) {
  if (name == "certified") return CopositivityStatus::Certified;
  if (name == "refuted") return CopositivityStatus::Refuted;
  if (name == "unknown") return CopositivityStatus::Unknown;
  throw IoError("certificate: unknown status '" + name + "'");
}

// Sequential reader over the ordered key-value pairs of a certificate file.
struct KvCursor {
  const std::vector<std::pair<std::string, std::string>>& kv;
  std::size_t pos = 0;

  bool at(const std::string& key) const {
    return pos < kv.size() && kv[pos].first == key;
  }
  std::string expect(const std::string& key) {
    if (!at(key))
      throw IoError("certificate: expected '" + key + "' at entry " +
                    std::to_string(pos + 1));
    return kv[pos++].second;
  }
};

}  // namespace detail

inline void write_order_certificate(const std::filesystem::path& path,
                                    const OrderVerdict& verdict) {
  std::ofstream out = detail::open_for_write(path);
  out << "certificate_version 1\n";
  out << "status " << detail::status_name(verdict.status) << '\n';
  out << "refuted_m " << verdict.refuted_m << '\n';
  out << "members " << verdict.per_m.size() << '\n';
  for (std::size_t k = 0; k < verdict.per_m.size(); ++k) {
    const CopositivityVerdict& v = verdict.per_m[k];
    if (v.certificate.cells.size() != v.cell_min.size())
      throw IoError("certificate: cell list and minima disagree");
    out << "member " << (k + 1) << '\n';
    out << "status " << detail::status_name(v.status) << '\n';
    out << "tol " << detail::format_double(v.tol) << '\n';
    out << "max_depth_seen " << v.max_depth_seen << '\n';
    out << "depth_exhausted " << (v.depth_exhausted ? 1 : 0) << '\n';
    out << "cells_processed " << v.cells_processed << '\n';
    if (v.witness.size() > 0) {
      out << "witness";
      for (Eigen::Index i = 0; i < v.witness.size(); ++i)
        out << ' ' << detail::format_double(v.witness[i]);
      out << '\n';
      out << "witness_value " << detail::format_double(v.witness_value) << '\n';
    }
    out << "cells " << v.certificate.cells.size() << '\n';
    for (std::size_t c = 0; c < v.certificate.cells.size(); ++c) {
      const SimplicialCell& cell = v.certificate.cells[c];
      out << "cell " << (c + 1) << '\n';
      out << "depth " << cell.depth << '\n';
      out << "min " << detail::format_double(v.cell_min[c]) << '\n';
      for (Eigen::Index j = 0; j < cell.V.cols(); ++j) {
        out << "vertex";
        for (Eigen::Index i = 0; i < cell.V.rows(); ++i)
          out << ' ' << detail::format_double(cell.V(i, j));
        out << '\n';
      }
    }
  }
  if (!out.good()) throw IoError("write failed: " + path.string());
}

inline OrderVerdict read_order_certificate(const std::filesystem::path& path) {
  const auto kv = read_key_value_file(path);
  detail::KvCursor cur{kv};
  if (cur.expect("certificate_version") != "1")
    throw IoError("certificate: unsupported version in " + path.string());

  OrderVerdict verdict;
  verdict.status = detail::status_from_name(cur.expect("status"));
  verdict.refuted_m = static_cast<int>(detail::parse_int_token(cur.expect("refuted_m")));
  const long long members = detail::parse_int_token(cur.expect("members"));
  for (long long k = 1; k <= members; ++k) {
    if (detail::parse_int_token(cur.expect("member")) != k)
      throw IoError("certificate: member blocks out of order");
    CopositivityVerdict v;
    v.status = detail::status_from_name(cur.expect("status"));
    v.tol = detail::parse_double_token(cur.expect("tol"));
    v.max_depth_seen =
        static_cast<int>(detail::parse_int_token(cur.expect("max_depth_seen")));
    v.depth_exhausted = detail::parse_int_token(cur.expect("depth_exhausted")) != 0;
    v.cells_processed = detail::parse_int_token(cur.expect("cells_processed"));
    if (cur.at("witness")) {
      const std::vector<double> w = parse_double_list(cur.expect("witness"));
      v.witness.resize(static_cast<Eigen::Index>(w.size()));
      for (std::size_t i = 0; i < w.size(); ++i)
        v.witness[static_cast<Eigen::Index>(i)] = w[i];
      v.witness_value = detail::parse_double_token(cur.expect("witness_value"));
    }
    const long long cells = detail::parse_int_token(cur.expect("cells"));
    for (long long c = 1; c <= cells; ++c) {
      if (detail::parse_int_token(cur.expect("cell")) != c)
        throw IoError("certificate: cell blocks out of order");
      SimplicialCell cell;
      cell.depth = static_cast<int>(detail::parse_int_token(cur.expect("depth")));
      v.cell_min.push_back(detail::parse_double_token(cur.expect("min")));
      std::vector<std::vector<double>> cols;
      while (cur.at("vertex"))
        cols.push_back(parse_double_list(cur.expect("vertex")));
      if (cols.empty()) throw IoError("certificate: cell without vertices");
      const std::size_t X = cols.front().size();
      if (cols.size() != X)
        throw IoError("certificate: cell vertex count must equal the dimension");
      cell.V.resize(static_cast<Eigen::Index>(X), static_cast<Eigen::Index>(X));
      for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j].size() != X)
          throw IoError("certificate: vertex length mismatch");
        for (std::size_t i = 0; i < X; ++i)
          cell.V(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
              cols[j][i];
      }
      v.certificate.cells.push_back(std::move(cell));
    }
    verdict.per_m.push_back(std::move(v));
  }
  if (cur.pos != kv.size())
    throw IoError("certificate: trailing entries in " + path.string());
  return verdict;
}

// ---------------------------------------------------------------------------
// Run manifests: a version header followed by caller-supplied key-value
// fields in their given order (config hash, versions, timings, ...).
// ---------------------------------------------------------------------------

inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string eigen_version_string() {
  std::ostringstream os;
  os << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.'
     << EIGEN_MINOR_VERSION;
  return os.str();
}

inline std::string compiler_version_string() {
#if defined(__clang__)
  return std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  return std::string("gcc ") + __VERSION__;
#else
  return "unknown";
#endif
}

inline void write_run_manifest(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& fields) {
  std::ofstream out = detail::open_for_write(path);
  out << "manifest_version 1\n";
  for (const auto& [key, value] : fields) {
    if (key.empty() || key.find_first_of(" \t\n") != std::string::npos)
      throw IoError("manifest: invalid key '" + key + "'");
    out << key << ' ' << value << '\n';
  }
  if (!out.good()) throw IoError("write failed: " + path.string());
}

}  // namespace hmmbounds
