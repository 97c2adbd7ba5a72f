#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmtc/common.hpp"

namespace mmtc {

// Sparse binary parity-check matrix, stored as adjacency lists both ways.
struct ParityMatrix {
  int n_rows = 0;
  int n_cols = 0;
  std::vector<std::vector<int>> col_rows;  // ascending row indices per column
  std::vector<std::vector<int>> row_cols;  // ascending column indices per row

  void rebuild_rows() {
    row_cols.assign(n_rows, {});
    for (int c = 0; c < n_cols; ++c)
      for (int r : col_rows[c]) row_cols[r].push_back(c);
  }

  // True if two columns share more than one row, i.e. the Tanner graph
  // contains a length-4 cycle.
  bool has_length4_cycle() const {
    std::vector<std::vector<uint8_t>> seen(n_rows,
                                           std::vector<uint8_t>(n_rows, 0));
    for (int c = 0; c < n_cols; ++c) {
      const auto& rows = col_rows[c];
      for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = i + 1; j < rows.size(); ++j) {
          const int a = rows[i], b = rows[j];
          if (seen[a][b]) return true;
          seen[a][b] = 1;
          seen[b][a] = 1;
        }
    }
    return false;
  }

  bool parity_ok(const std::vector<uint8_t>& codeword) const {
    if (static_cast<int>(codeword.size()) != n_cols)
      throw std::invalid_argument("parity_ok: codeword length mismatch");
    for (const auto& cols : row_cols) {
      int acc = 0;
      for (int c : cols) acc ^= codeword[c];
      if (acc) return false;
    }
    return true;
  }
};

// Regular-column LDPC code with a systematic encoder derived from the
// reduced row echelon form of H over GF(2).  Info bits live on the free
// columns of H; each pivot column is the XOR of a fixed subset of them.
class LdpcCode {
 public:
  ParityMatrix H;
  std::vector<int> info_cols;   // free columns, ascending
  std::vector<int> pivot_cols;  // pivot columns, ascending by pivot row
  // parity_deps[i] lists the info-bit indices XORed into pivot_cols[i]
  std::vector<std::vector<int>> parity_deps;

  int n() const { return H.n_cols; }
  int k() const { return static_cast<int>(info_cols.size()); }
  int rank() const { return static_cast<int>(pivot_cols.size()); }
  double rate() const { return static_cast<double>(k()) / n(); }

  std::vector<uint8_t> encode(const std::vector<uint8_t>& message) const {
    if (static_cast<int>(message.size()) != k())
      throw std::invalid_argument("encode: message length mismatch");
    std::vector<uint8_t> cw(n(), 0);
    for (int i = 0; i < k(); ++i) cw[info_cols[i]] = message[i] & 1u;
    for (size_t i = 0; i < pivot_cols.size(); ++i) {
      uint8_t bit = 0;
      for (int dep : parity_deps[i]) bit ^= message[dep] & 1u;
      cw[pivot_cols[i]] = bit;
    }
    return cw;
  }

  std::vector<uint8_t> extract_message(
      const std::vector<uint8_t>& codeword) const {
    if (static_cast<int>(codeword.size()) != n())
      throw std::invalid_argument("extract_message: codeword length mismatch");
    std::vector<uint8_t> msg(k());
    for (int i = 0; i < k(); ++i) msg[i] = codeword[info_cols[i]] & 1u;
    return msg;
  }
};

namespace detail {

// Row-reduce a dense GF(2) copy of H and derive the systematic encoder.
inline void build_generator(LdpcCode& code) {
  const int m = code.H.n_rows;
  const int n = code.H.n_cols;
  const int words = (n + 63) / 64;
  std::vector<std::vector<uint64_t>> rows(m,
                                          std::vector<uint64_t>(words, 0));
  for (int c = 0; c < n; ++c)
    for (int r : code.H.col_rows[c]) rows[r][c >> 6] ^= 1ull << (c & 63);

  auto get = [&](int r, int c) -> int {
    return (rows[r][c >> 6] >> (c & 63)) & 1u;
  };

  std::vector<int> pivot_row_of_col(n, -1);
  int pr = 0;
  for (int c = 0; c < n && pr < m; ++c) {
    int sel = -1;
    for (int r = pr; r < m; ++r)
      if (get(r, c)) {
        sel = r;
        break;
      }
    if (sel < 0) continue;
    std::swap(rows[sel], rows[pr]);
    for (int r = 0; r < m; ++r) {
      if (r != pr && get(r, c))
        for (int w = 0; w < words; ++w) rows[r][w] ^= rows[pr][w];
    }
    pivot_row_of_col[c] = pr;
    ++pr;
  }

  code.info_cols.clear();
  code.pivot_cols.clear();
  std::vector<int> info_index_of_col(n, -1);
  for (int c = 0; c < n; ++c) {
    if (pivot_row_of_col[c] < 0) {
      info_index_of_col[c] = static_cast<int>(code.info_cols.size());
      code.info_cols.push_back(c);
    }
  }
  // pivot columns ordered by their pivot row so parity_deps lines up
  std::vector<std::pair<int, int>> piv;  // (row, col)
  for (int c = 0; c < n; ++c)
    if (pivot_row_of_col[c] >= 0) piv.emplace_back(pivot_row_of_col[c], c);
  std::sort(piv.begin(), piv.end());

  code.parity_deps.clear();
  for (const auto& [r, c] : piv) {
    code.pivot_cols.push_back(c);
    std::vector<int> deps;
    for (int f : code.info_cols)
      if (get(r, f)) deps.push_back(info_index_of_col[f]);
    code.parity_deps.push_back(std::move(deps));
  }
}

}  // namespace detail

// Progressive-edge-growth style construction of a column-regular parity
// matrix whose Tanner graph has no length-4 cycles.  Rows are filled
// greedily by current degree; a bounded number of restarts handles the
// occasional dead end at high edge density.
inline LdpcCode build_ldpc(int n_cols, int n_rows, int col_weight,
                           std::mt19937_64& rng, int max_attempts = 400) {
  if (n_cols <= 0 || n_rows <= 0) throw std::invalid_argument("build_ldpc: empty matrix");
  if (col_weight <= 0 || col_weight > n_rows)
    throw std::invalid_argument("build_ldpc: bad column weight");
  const long pair_budget = static_cast<long>(n_rows) * (n_rows - 1) / 2;
  const long pairs_needed =
      static_cast<long>(n_cols) * col_weight * (col_weight - 1) / 2;
  if (pairs_needed > pair_budget)
    throw std::invalid_argument(
        "build_ldpc: column weight too high for a 4-cycle-free graph");

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    ParityMatrix H;
    H.n_rows = n_rows;
    H.n_cols = n_cols;
    H.col_rows.assign(n_cols, {});
    std::vector<int> degree(n_rows, 0);
    std::vector<std::vector<uint8_t>> pair_used(
        n_rows, std::vector<uint8_t>(n_rows, 0));
    bool ok = true;

    for (int c = 0; c < n_cols && ok; ++c) {
      std::vector<int> chosen;
      for (int e = 0; e < col_weight; ++e) {
        // candidate rows: unused in this column, no reused row pair
        std::vector<int> cand;
        int best_deg = n_cols * col_weight + 1;
        for (int r = 0; r < n_rows; ++r) {
          bool clash = false;
          for (int p : chosen) {
            if (p == r || pair_used[p][r]) {
              clash = true;
              break;
            }
          }
          if (clash) continue;
          if (degree[r] < best_deg) {
            best_deg = degree[r];
            cand.clear();
          }
          if (degree[r] == best_deg) cand.push_back(r);
        }
        if (cand.empty()) {
          ok = false;
          break;
        }
        std::uniform_int_distribution<size_t> pick(0, cand.size() - 1);
        const int r = cand[pick(rng)];
        for (int p : chosen) {
          pair_used[p][r] = 1;
          pair_used[r][p] = 1;
        }
        chosen.push_back(r);
        ++degree[r];
      }
      if (!ok) break;
      std::sort(chosen.begin(), chosen.end());
      H.col_rows[c] = std::move(chosen);
    }
    if (!ok) continue;

    H.rebuild_rows();
    LdpcCode code;
    code.H = std::move(H);
    detail::build_generator(code);
    if (code.k() == 0) continue;  // degenerate rank, retry
    return code;
  }
  throw std::runtime_error("build_ldpc: construction failed after retries");
}

// ---- alist persistence (1-based indices, zero-padded entries) ----

inline void write_alist(const ParityMatrix& H, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_alist: cannot open " + path);
  size_t max_col = 0, max_row = 0;
  for (const auto& v : H.col_rows) max_col = std::max(max_col, v.size());
  for (const auto& v : H.row_cols) max_row = std::max(max_row, v.size());
  out << H.n_cols << ' ' << H.n_rows << '\n';
  out << max_col << ' ' << max_row << '\n';
  for (int c = 0; c < H.n_cols; ++c)
    out << H.col_rows[c].size() << (c + 1 < H.n_cols ? ' ' : '\n');
  for (int r = 0; r < H.n_rows; ++r)
    out << H.row_cols[r].size() << (r + 1 < H.n_rows ? ' ' : '\n');
  for (const auto& rows : H.col_rows) {
    for (size_t i = 0; i < max_col; ++i)
      out << (i < rows.size() ? rows[i] + 1 : 0) << (i + 1 < max_col ? ' ' : '\n');
  }
  for (const auto& cols : H.row_cols) {
    for (size_t i = 0; i < max_row; ++i)
      out << (i < cols.size() ? cols[i] + 1 : 0) << (i + 1 < max_row ? ' ' : '\n');
  }
  if (!out) throw std::runtime_error("write_alist: write failed for " + path);
}

inline ParityMatrix read_alist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_alist: cannot open " + path);
  int n_cols = 0, n_rows = 0, max_col = 0, max_row = 0;
  if (!(in >> n_cols >> n_rows >> max_col >> max_row) || n_cols <= 0 ||
      n_rows <= 0)
    throw std::runtime_error("read_alist: bad header in " + path);
  std::vector<int> col_deg(n_cols), row_deg(n_rows);
  for (auto& d : col_deg) in >> d;
  for (auto& d : row_deg) in >> d;
  ParityMatrix H;
  H.n_rows = n_rows;
  H.n_cols = n_cols;
  H.col_rows.assign(n_cols, {});
  for (int c = 0; c < n_cols; ++c) {
    for (int i = 0; i < max_col; ++i) {
      int v = 0;
      if (!(in >> v)) throw std::runtime_error("read_alist: truncated " + path);
      if (v > 0) H.col_rows[c].push_back(v - 1);
    }
    if (static_cast<int>(H.col_rows[c].size()) != col_deg[c])
      throw std::runtime_error("read_alist: degree mismatch in " + path);
    std::sort(H.col_rows[c].begin(), H.col_rows[c].end());
  }
  // row adjacency is redundant given the column lists; skip to EOF
  H.rebuild_rows();
  for (int r = 0; r < n_rows; ++r)
    if (static_cast<int>(H.row_cols[r].size()) != row_deg[r])
      throw std::runtime_error("read_alist: row degree mismatch in " + path);
  return H;
}

// ---- belief propagation ----

struct SpaResult {
  std::vector<double> posterior;  // input + all check messages
  std::vector<double> extrinsic;  // posterior - input
  std::vector<uint8_t> hard;      // 1 where posterior favours bit 1
  bool parity_satisfied = false;
  int iterations_run = 0;
};

// Flooding sum-product decoder over LLRs with the convention
// L = log P(bit=0) - log P(bit=1).  Leave-one-out check updates use
// prefix/suffix products of tanh(L/2); early exit once every parity
// check is satisfied.
inline SpaResult spa_decode(const std::vector<double>& channel_llrs,
                            const ParityMatrix& H, int max_iters) {
  if (static_cast<int>(channel_llrs.size()) != H.n_cols)
    throw std::invalid_argument("spa_decode: llr length mismatch");
  if (max_iters < 1) throw std::invalid_argument("spa_decode: max_iters < 1");

  // edge layout: one slot per (row, col) pair, grouped by row
  std::vector<int> row_off(H.n_rows + 1, 0);
  for (int r = 0; r < H.n_rows; ++r)
    row_off[r + 1] = row_off[r] + static_cast<int>(H.row_cols[r].size());
  const int n_edges = row_off[H.n_rows];
  std::vector<int> edge_col(n_edges);
  for (int r = 0; r < H.n_rows; ++r)
    for (size_t i = 0; i < H.row_cols[r].size(); ++i)
      edge_col[row_off[r] + static_cast<int>(i)] = H.row_cols[r][i];

  std::vector<double> c2v(n_edges, 0.0);  // check-to-variable messages
  constexpr double kTanhCap = 1.0 - 1e-12;

  SpaResult res;
  res.posterior.assign(H.n_cols, 0.0);
  res.hard.assign(H.n_cols, 0);
  std::vector<double> t(64);

  for (int iter = 1; iter <= max_iters; ++iter) {
    res.iterations_run = iter;
    // check node update from v2c = posterior-style totals minus own c2v;
    // on the first pass totals are just the channel LLRs
    for (int r = 0; r < H.n_rows; ++r) {
      const int deg = row_off[r + 1] - row_off[r];
      if (deg > static_cast<int>(t.size())) t.resize(deg);
      for (int i = 0; i < deg; ++i) {
        const int e = row_off[r] + i;
        const double v2c =
            (iter == 1 ? channel_llrs[edge_col[e]]
                       : res.posterior[edge_col[e]] - c2v[e]);
        t[i] = std::clamp(std::tanh(0.5 * v2c), -kTanhCap, kTanhCap);
      }
      // prefix/suffix products give leave-one-out without division
      std::vector<double> suf(deg + 1, 1.0);
      for (int i = deg - 1; i >= 0; --i) suf[i] = suf[i + 1] * t[i];
      double prefix = 1.0;
      for (int i = 0; i < deg; ++i) {
        const double prod = prefix * suf[i + 1];
        c2v[row_off[r] + i] =
            2.0 * std::atanh(std::clamp(prod, -kTanhCap, kTanhCap));
        prefix *= t[i];
      }
    }

    for (int c = 0; c < H.n_cols; ++c) res.posterior[c] = channel_llrs[c];
    for (int e = 0; e < n_edges; ++e) res.posterior[edge_col[e]] += c2v[e];
    for (int c = 0; c < H.n_cols; ++c) res.hard[c] = res.posterior[c] < 0.0;

    if (H.parity_ok(res.hard)) {
      res.parity_satisfied = true;
      break;
    }
  }

  res.extrinsic.assign(H.n_cols, 0.0);
  for (int c = 0; c < H.n_cols; ++c)
    res.extrinsic[c] = res.posterior[c] - channel_llrs[c];
  return res;
}

}  // namespace mmtc
