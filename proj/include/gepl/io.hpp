#pragma once

// Plain-text formats.
//
//   sample file : "N=<n> KUP=<k>" header, then one draw per line as N
//                 comma-separated 1-based labels
//   trace file  : one log posterior per line, aligned with the sample rows
//   GMM data    : one real per line
//   SBM data    : "nodes=<N>" header, then "i j" undirected edges, 1-based
//   LBM data    : dense 0/1 CSV, one matrix row per line
//
// Blank lines and lines starting with '#' are skipped in data files.

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gepl/epl.hpp"
#include "gepl/error.hpp"
#include "gepl/models.hpp"
#include "gepl/partition.hpp"

namespace gepl::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool skippable(std::string_view line) { return line.empty() || line.front() == '#'; }

inline std::string where(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

template <class T>
T parse_integer(std::string_view tok, std::size_t line_no) {
  tok = trim(tok);
  T v{};
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || tok.empty()) {
    throw DataError(where(line_no) + "expected an integer, got '" + std::string(tok) + "'");
  }
  return v;
}

inline double parse_real(std::string_view tok, std::size_t line_no) {
  tok = trim(tok);
  std::string s(tok);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw DataError(where(line_no) + "expected a number, got '" + s + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Parses "key=<value>" fields separated by whitespace.
inline std::optional<std::size_t> header_field(std::string_view line, std::string_view key, std::size_t line_no) {
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) {
    if (tok.size() > key.size() && std::string_view(tok).substr(0, key.size()) == key && tok[key.size()] == '=') {
      return parse_integer<std::size_t>(std::string_view(tok).substr(key.size() + 1), line_no);
    }
  }
  return std::nullopt;
}

template <class Fn>
void with_file(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  fn(in);
}

}  // namespace detail

inline PosteriorSample read_sample(std::istream& in, std::optional<std::vector<double>> trace = std::nullopt) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> n, k_up;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    n = detail::header_field(t, "N", line_no);
    k_up = detail::header_field(t, "KUP", line_no);
    if (!n || !k_up) throw DataError(detail::where(line_no) + "expected header 'N=<n> KUP=<k>'");
    break;
  }
  if (!n) throw DataError("sample file is empty");
  if (*n == 0 || *k_up == 0) throw DataError(detail::where(line_no) + "N and KUP must be positive");
  std::vector<Label> draws;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto fields = detail::split(t, ',');
    if (fields.size() != *n) {
      throw DataError(detail::where(line_no) + "expected " + std::to_string(*n) + " labels, found " +
                      std::to_string(fields.size()));
    }
    for (auto f : fields) {
      const auto l = detail::parse_integer<std::size_t>(f, line_no);
      if (l < 1 || l > *k_up) {
        throw DataError(detail::where(line_no) + "label " + std::to_string(l) + " outside 1.." + std::to_string(*k_up));
      }
      draws.push_back(static_cast<Label>(l - 1));
    }
  }
  if (draws.empty()) throw DataError("sample file has no draws");
  return PosteriorSample(*n, *k_up, std::move(draws), std::move(trace));
}

inline std::vector<double> read_trace(std::istream& in) {
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    if (t == "-inf") {
      out.push_back(-std::numeric_limits<double>::infinity());
      continue;
    }
    out.push_back(detail::parse_real(t, line_no));
  }
  return out;
}

inline PosteriorSample read_sample_file(const std::string& path, const std::optional<std::string>& trace_path = {}) {
  std::optional<std::vector<double>> trace;
  if (trace_path) detail::with_file(*trace_path, [&](std::istream& in) { trace = read_trace(in); });
  std::optional<PosteriorSample> s;
  detail::with_file(path, [&](std::istream& in) {
    s.emplace(read_sample(in));
  });
  if (trace && trace->size() != s->rows()) {
    throw DataError("trace has " + std::to_string(trace->size()) + " entries but the sample has " +
                    std::to_string(s->rows()) + " rows");
  }
  return PosteriorSample(s->n_items(), s->k_up(), {s->flat().begin(), s->flat().end()}, std::move(trace));
}

inline void write_sample(std::ostream& out, const PosteriorSample& s) {
  out << "N=" << s.n_items() << " KUP=" << s.k_up() << '\n';
  for (std::size_t t = 0; t < s.rows(); ++t) {
    const auto row = s.row(t);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << row[i] + 1;
    }
    out << '\n';
  }
}

inline void write_trace(std::ostream& out, const std::vector<double>& trace) {
  out << std::setprecision(17);
  for (double v : trace) out << v << '\n';
}

inline std::vector<double> read_gmm_data(std::istream& in) {
  std::vector<double> y;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (detail::skippable(t)) continue;
    const double v = detail::parse_real(t, line_no);
    if (!std::isfinite(v)) throw DataError(detail::where(line_no) + "observation is not finite");
    y.push_back(v);
  }
  if (y.empty()) throw DataError("no observations found");
  return y;
}

inline Graph read_edge_list(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<Graph> g;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (detail::skippable(t)) continue;
    if (!g) {
      const auto n = detail::header_field(t, "nodes", line_no);
      if (!n || *n == 0) throw DataError(detail::where(line_no) + "expected header 'nodes=<N>'");
      g.emplace(*n);
      continue;
    }
    std::istringstream fields{std::string(t)};
    std::string a, b, extra;
    if (!(fields >> a >> b) || (fields >> extra)) throw DataError(detail::where(line_no) + "expected 'i j'");
    const auto i = detail::parse_integer<std::size_t>(a, line_no);
    const auto j = detail::parse_integer<std::size_t>(b, line_no);
    if (i < 1 || j < 1 || i > g->nodes() || j > g->nodes()) {
      throw DataError(detail::where(line_no) + "node id outside 1.." + std::to_string(g->nodes()));
    }
    if (i == j) throw DataError(detail::where(line_no) + "self-loop on node " + std::to_string(i));
    g->add_edge(i - 1, j - 1);
  }
  if (!g) throw DataError("edge list is missing its 'nodes=<N>' header");
  return std::move(*g);
}

struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> y;
};

inline BinaryMatrix read_binary_matrix(std::istream& in) {
  BinaryMatrix m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (detail::skippable(t)) continue;
    const auto fields = detail::split(t, ',');
    if (m.rows == 0) m.cols = fields.size();
    if (fields.size() != m.cols) {
      throw DataError(detail::where(line_no) + "expected " + std::to_string(m.cols) + " columns, found " +
                      std::to_string(fields.size()));
    }
    for (auto f : fields) {
      const auto v = detail::parse_integer<unsigned>(f, line_no);
      if (v > 1) throw DataError(detail::where(line_no) + "entries must be 0 or 1");
      m.y.push_back(static_cast<std::uint8_t>(v));
    }
    ++m.rows;
  }
  if (m.rows == 0) throw DataError("matrix file is empty");
  return m;
}

inline void write_psm_csv(std::ostream& out, const Psm& m) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

}  // namespace gepl::io
