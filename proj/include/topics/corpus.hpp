// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "topics/rng.hpp"

namespace topics {

// One observed (document, word) token. Co-occurrence inputs map their row
// key to `doc` and their column key to `word`.
struct Pair {
  std::uint32_t doc = 0;
  std::uint32_t word = 0;

  friend bool operator==(Pair a, Pair b) {
    return a.doc == b.doc && a.word == b.word;
  }
};

struct Triplet {
  std::uint32_t doc = 0;
  std::uint32_t word = 0;
  std::int64_t count = 0;

  friend bool operator==(const Triplet& a, const Triplet& b) {
    return a.doc == b.doc && a.word == b.word && a.count == b.count;
  }
};

// Expanded token stream: a cell with count c contributes c identical pairs,
// in file order, with repetitions contiguous.
struct Corpus {
  std::uint64_t num_docs = 0;
  std::uint64_t vocab_size = 0;
  std::vector<Pair> pairs;
  std::vector<std::string> vocab;  // empty, or exactly vocab_size entries

  std::size_t size() const { return pairs.size(); }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t line)
      : std::runtime_error(message + " at line " + std::to_string(line)),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline bool parse_int64(const std::string& text, std::int64_t& out) {
  std::istringstream in(text);
  in >> out;
  if (in.fail()) return false;
  std::string rest;
  in >> rest;
  return rest.empty();
}

inline std::string strip(const std::string& s) {
  std::size_t begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  std::size_t end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace detail

// UCI bag-of-words: three integer header lines (D, W, NNZ) followed by NNZ
// triplet lines "docID wordID count" with 1-based indices.
inline Corpus load_uci_bow(const std::string& docword_path,
                           const std::string& vocab_path = "") {
  std::ifstream in(docword_path);
  if (!in) throw std::runtime_error("cannot open " + docword_path);

  std::string line;
  std::size_t line_no = 0;
  std::int64_t header[3];  // D, W, NNZ
  static const char* header_names[3] = {"document count", "vocab size",
                                        "triplet count"};
  for (int h = 0; h < 3; ++h) {
    if (!std::getline(in, line))
      throw ParseError("malformed header: missing line", line_no + 1);
    ++line_no;
    if (!detail::parse_int64(detail::strip(line), header[h]) || header[h] < 0)
      throw ParseError(std::string("malformed header: bad ") + header_names[h],
                       line_no);
  }
  const std::int64_t num_docs = header[0];
  const std::int64_t vocab_size = header[1];
  const std::int64_t nnz = header[2];
  if (num_docs > std::numeric_limits<std::uint32_t>::max() ||
      vocab_size > std::numeric_limits<std::uint32_t>::max())
    throw ParseError("malformed header: dimension exceeds supported range",
                     line_no);

  Corpus corpus;
  corpus.num_docs = static_cast<std::uint64_t>(num_docs);
  corpus.vocab_size = static_cast<std::uint64_t>(vocab_size);

  std::int64_t seen = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = detail::strip(line);
    if (body.empty()) continue;  // tolerate trailing blank lines
    if (seen == nnz)
      throw ParseError("triplet count mismatch: expected " +
                           std::to_string(nnz) + " triplets, found more",
                       line_no);
    std::istringstream row(body);
    std::int64_t doc_id, word_id, count;
    std::string rest;
    row >> doc_id >> word_id >> count;
    if (row.fail() || (row >> rest, !rest.empty()))
      throw ParseError("malformed triplet", line_no);
    if (doc_id < 1 || doc_id > num_docs)
      throw ParseError("document index " + std::to_string(doc_id) +
                           " exceeds document count " +
                           std::to_string(num_docs),
                       line_no);
    if (word_id < 1 || word_id > vocab_size)
      throw ParseError("word index " + std::to_string(word_id) +
                           " exceeds vocab size " + std::to_string(vocab_size),
                       line_no);
    if (count < 1)
      throw ParseError("non-positive count " + std::to_string(count), line_no);
    const Pair pair{static_cast<std::uint32_t>(doc_id - 1),
                    static_cast<std::uint32_t>(word_id - 1)};
    corpus.pairs.insert(corpus.pairs.end(), static_cast<std::size_t>(count),
                        pair);
    ++seen;
  }
  if (seen != nnz)
    throw ParseError("triplet count mismatch: expected " + std::to_string(nnz) +
                         " triplets, found " + std::to_string(seen),
                     line_no + 1);

  if (!vocab_path.empty()) {
    std::ifstream vin(vocab_path);
    if (!vin) throw std::runtime_error("cannot open " + vocab_path);
    std::string word;
    while (std::getline(vin, word)) {
      word = detail::strip(word);
      if (word.empty() && vin.peek() == EOF) break;
      corpus.vocab.push_back(word);
    }
    if (corpus.vocab.size() != corpus.vocab_size)
      throw std::runtime_error(
          "vocab file has " + std::to_string(corpus.vocab.size()) +
          " entries, expected " + std::to_string(corpus.vocab_size));
  }
  return corpus;
}

struct CsvLoadStats {
  std::size_t merged_cells = 0;     // duplicate (row, col) rows summed
  std::size_t zero_count_rows = 0;  // rows with count 0, skipped
};

// Triplet CSV: rows "row_key,col_key,count" with string keys. Keys are
// dictionary-encoded to dense 0-based ids in first-appearance order;
// duplicate cells merge by summation.
inline Corpus load_triplet_csv(const std::string& path, bool has_header,
                               CsvLoadStats* stats = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  struct Cell {
    std::uint32_t doc;
    std::uint32_t word;
    std::int64_t count;
  };
  std::vector<Cell> cells;
  std::unordered_map<std::uint64_t, std::size_t> cell_index;
  std::unordered_map<std::string, std::uint32_t> doc_ids;
  std::unordered_map<std::string, std::uint32_t> word_ids;
  std::vector<std::string> word_names;
  CsvLoadStats local;

  std::string line;
  std::size_t line_no = 0;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (has_header && line_no == 1) continue;
    const std::string body = detail::strip(line);
    if (body.empty()) continue;
    std::size_t c1 = body.find(',');
    std::size_t c2 = c1 == std::string::npos ? std::string::npos
                                             : body.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        body.find(',', c2 + 1) != std::string::npos)
      throw ParseError("malformed row: expected row_key,col_key,count",
                       line_no);
    const std::string row_key = detail::strip(body.substr(0, c1));
    const std::string col_key = detail::strip(body.substr(c1 + 1, c2 - c1 - 1));
    const std::string count_text = detail::strip(body.substr(c2 + 1));
    if (row_key.empty() || col_key.empty())
      throw ParseError("malformed row: empty key", line_no);
    std::int64_t count;
    if (!detail::parse_int64(count_text, count))
      throw ParseError("non-integer count \"" + count_text + "\"", line_no);
    if (count < 0)
      throw ParseError("negative count " + std::to_string(count), line_no);
    ++data_rows;
    if (count == 0) {
      ++local.zero_count_rows;
      continue;
    }

    auto doc_it = doc_ids.find(row_key);
    if (doc_it == doc_ids.end())
      doc_it = doc_ids.emplace(row_key,
                               static_cast<std::uint32_t>(doc_ids.size()))
                   .first;
    auto word_it = word_ids.find(col_key);
    if (word_it == word_ids.end()) {
      word_it = word_ids.emplace(col_key,
                                 static_cast<std::uint32_t>(word_ids.size()))
                    .first;
      word_names.push_back(col_key);
    }
    const std::uint64_t key =
        (static_cast<std::uint64_t>(doc_it->second) << 32) | word_it->second;
    auto cell_it = cell_index.find(key);
    if (cell_it == cell_index.end()) {
      cell_index.emplace(key, cells.size());
      cells.push_back({doc_it->second, word_it->second, count});
    } else {
      cells[cell_it->second].count += count;
      ++local.merged_cells;
    }
  }
  if (data_rows == 0) throw std::runtime_error("empty file: " + path);

  Corpus corpus;
  corpus.num_docs = doc_ids.size();
  corpus.vocab_size = word_ids.size();
  corpus.vocab = std::move(word_names);
  for (const Cell& cell : cells)
    corpus.pairs.insert(corpus.pairs.end(),
                        static_cast<std::size_t>(cell.count),
                        Pair{cell.doc, cell.word});
  if (stats) *stats = local;
  return corpus;
}

// Re-aggregates the expanded stream into triplets by contiguous runs of the
// same (doc, word). Inverts expansion for any loader output.
inline std::vector<Triplet> aggregate_pairs(const Corpus& corpus) {
  std::vector<Triplet> triplets;
  for (const Pair& p : corpus.pairs) {
    if (!triplets.empty() && triplets.back().doc == p.doc &&
        triplets.back().word == p.word)
      ++triplets.back().count;
    else
      triplets.push_back({p.doc, p.word, 1});
  }
  return triplets;
}

inline void save_uci_bow(const Corpus& corpus, const std::string& docword_path,
                         const std::string& vocab_path = "") {
  std::ofstream out(docword_path);
  if (!out) throw std::runtime_error("cannot write " + docword_path);
  const std::vector<Triplet> triplets = aggregate_pairs(corpus);
  out << corpus.num_docs << "\n" << corpus.vocab_size << "\n"
      << triplets.size() << "\n";
  for (const Triplet& t : triplets)
    out << t.doc + 1 << " " << t.word + 1 << " " << t.count << "\n";
  if (!vocab_path.empty()) {
    std::ofstream vout(vocab_path);
    if (!vout) throw std::runtime_error("cannot write " + vocab_path);
    for (std::uint64_t w = 0; w < corpus.vocab_size; ++w)
      vout << (w < corpus.vocab.size() ? corpus.vocab[w]
                                       : "w" + std::to_string(w))
           << "\n";
  }
}

inline void save_triplet_csv(const Corpus& corpus, const std::string& path,
                             bool header = true) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  if (header) out << "row,col,count\n";
  for (const Triplet& t : aggregate_pairs(corpus)) {
    out << "r" << t.doc << ",";
    if (t.word < corpus.vocab.size())
      out << corpus.vocab[t.word];
    else
      out << "c" << t.word;
    out << "," << t.count << "\n";
  }
}

// Binary corpus cache: 4-byte magic, version byte, then little-endian u64
// num_docs, vocab_size, M, and M (u32 doc, u32 word) records.
inline constexpr char kCacheMagic[4] = {'T', 'O', 'P', 'C'};
inline constexpr std::uint8_t kCacheVersion = 1;

namespace detail {

template <class T>
void write_raw(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated binary input");
  return value;
}

}  // namespace detail

inline void save_cache(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kCacheMagic, 4);
  detail::write_raw(out, kCacheVersion);
  detail::write_raw<std::uint64_t>(out, corpus.num_docs);
  detail::write_raw<std::uint64_t>(out, corpus.vocab_size);
  detail::write_raw<std::uint64_t>(out, corpus.pairs.size());
  for (const Pair& p : corpus.pairs) {
    detail::write_raw<std::uint32_t>(out, p.doc);
    detail::write_raw<std::uint32_t>(out, p.word);
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Corpus load_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
    throw std::runtime_error("bad cache magic in " + path);
  const auto version = detail::read_raw<std::uint8_t>(in);
  if (version != kCacheVersion)
    throw std::runtime_error("unsupported cache version " +
                             std::to_string(version));
  Corpus corpus;
  corpus.num_docs = detail::read_raw<std::uint64_t>(in);
  corpus.vocab_size = detail::read_raw<std::uint64_t>(in);
  const auto m = detail::read_raw<std::uint64_t>(in);
  corpus.pairs.reserve(m);
  for (std::uint64_t i = 0; i < m; ++i) {
    Pair p;
    p.doc = detail::read_raw<std::uint32_t>(in);
    p.word = detail::read_raw<std::uint32_t>(in);
    if (p.doc >= corpus.num_docs || p.word >= corpus.vocab_size)
      throw std::runtime_error("cache pair out of range in " + path);
    corpus.pairs.push_back(p);
  }
  return corpus;
}

// Pair-level holdout mask. Exactly round(fraction * M) pairs are held out
// (clamped so at least one pair remains on each side), chosen by a partial
// Fisher-Yates shuffle of the pair indices; fully determined by
// (M, fraction, seed).
struct Split {
  std::vector<bool> train_mask;
  double held_out_fraction = 0.0;
  std::uint64_t seed = 0;

  std::size_t train_count() const {
    return static_cast<std::size_t>(
        std::count(train_mask.begin(), train_mask.end(), true));
  }
  std::size_t held_out_count() const {
    return train_mask.size() - train_count();
  }
};

inline Split split_holdout(const Corpus& corpus, double fraction,
                           std::uint64_t seed) {
  const std::size_t m = corpus.pairs.size();
  if (m < 2)
    throw std::invalid_argument("split_holdout: corpus must have at least 2 pairs");
  if (!(fraction > 0.0) || !(fraction < 1.0))
    throw std::invalid_argument("split_holdout: fraction must lie in (0, 1)");

  std::size_t held = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(m)));
  held = std::max<std::size_t>(1, std::min(held, m - 1));

  std::vector<std::uint64_t> index(m);
  std::iota(index.begin(), index.end(), 0);
  std::mt19937_64 rng = seeded_rng(seed);
  Split split;
  split.held_out_fraction = fraction;
  split.seed = seed;
  split.train_mask.assign(m, true);
  for (std::size_t i = 0; i < held; ++i) {
    const std::size_t pick = i + uniform_index(rng, m - i);
    std::swap(index[i], index[pick]);
    split.train_mask[index[i]] = false;
  }
  return split;
}

inline std::vector<Pair> training_pairs(const Corpus& corpus,
                                        const Split& split) {
  std::vector<Pair> out;
  out.reserve(split.train_count());
  for (std::size_t j = 0; j < corpus.pairs.size(); ++j)
    if (split.train_mask[j]) out.push_back(corpus.pairs[j]);
  return out;
}

inline std::vector<Pair> held_out_pairs(const Corpus& corpus,
                                        const Split& split) {
  std::vector<Pair> out;
  out.reserve(split.held_out_count());
  for (std::size_t j = 0; j < corpus.pairs.size(); ++j)
    if (!split.train_mask[j]) out.push_back(corpus.pairs[j]);
  return out;
}

// Split that keeps every pair in training; used when no holdout is wanted.
inline Split full_training_split(const Corpus& corpus) {
  Split split;
  split.train_mask.assign(corpus.pairs.size(), true);
  return split;
}

}  // namespace topics
