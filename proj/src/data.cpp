#include "tpp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "tpp/error.hpp"
#include "tpp/random.hpp"

namespace tpp {

using nlohmann::json;

void EventSequence::validate(int num_types) const {
  if (times.size() != types.size()) {
    throw Error(ErrorCode::SchemaMismatch, "times and types differ in length");
  }
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i])) throw Error(ErrorCode::SchemaMismatch, "non-finite timestamp");
    const double prev = i == 0 ? 0.0 : times[i - 1];
    if (!(times[i] > prev)) {
      throw Error(ErrorCode::NonMonotoneTimestamps,
                  "event " + std::to_string(i) + " at " + std::to_string(times[i]));
    }
    if (types[i] < 0 || (num_types >= 0 && types[i] >= num_types)) {
      throw Error(ErrorCode::TypeOutOfRange, "type id " + std::to_string(types[i]));
    }
  }
  if (!times.empty() && t_end < times.back()) {
    throw Error(ErrorCode::NonMonotoneTimestamps, "t_end precedes the last event");
  }
}

EventSequence EventSequence::prefix(std::size_t n) const {
  n = std::min(n, times.size());
  EventSequence out;
  out.times.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(n));
  out.types.assign(types.begin(), types.begin() + static_cast<std::ptrdiff_t>(n));
  out.t_end = out.last_time();
  return out;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  throw Error(ErrorCode::SchemaMismatch, "unknown split label '" + name + "'");
}

std::size_t Dataset::num_events() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.size();
  return n;
}

double Dataset::mean_dtime() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : sequences) {
    total += s.last_time();
    n += s.size();
  }
  return n > 0 ? total / static_cast<double>(n) : 1.0;
}

std::filesystem::path metadata_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".meta.json";
  return p;
}

Dataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());

  Dataset ds;
  ds.split = schema.split;
  ds.name = path.stem().string();

  std::optional<int> k = schema.num_types;
  if (!k) {
    std::ifstream meta(metadata_path(path));
    if (meta) {
      const json m = json::parse(meta);
      if (m.contains("num_types")) k = m.at("num_types").get<int>();
      if (m.contains("name")) ds.name = m.at("name").get<std::string>();
    }
  }

  std::string line;
  std::size_t lineno = 0;
  int max_type = -1;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::size_t index = lineno++;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::SchemaMismatch, "record " + std::to_string(index) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains(schema.times_field) || !rec.contains(schema.types_field)) {
      throw Error(ErrorCode::SchemaMismatch, "record " + std::to_string(index) + " lacks times/types");
    }
    EventSequence seq;
    try {
      seq.times = rec.at(schema.times_field).get<std::vector<double>>();
      seq.types = rec.at(schema.types_field).get<std::vector<int>>();
      seq.t_end = rec.contains(schema.t_end_field) ? rec.at(schema.t_end_field).get<double>()
                                                   : seq.last_time();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaMismatch, "record " + std::to_string(index) + ": " + e.what());
    }
    try {
      seq.validate();
    } catch (const Error& e) {
      throw Error(e.code(), "sequence " + std::to_string(index) + ": " + e.what());
    }
    for (int t : seq.types) max_type = std::max(max_type, t);
    ds.sequences.push_back(std::move(seq));
  }

  ds.num_types = k.value_or(max_type + 1);
  if (ds.num_types < max_type + 1) {
    throw Error(ErrorCode::TypeOutOfRange, "declared K=" + std::to_string(ds.num_types) +
                                               " but type " + std::to_string(max_type) + " present");
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  for (const auto& s : dataset.sequences) {
    json rec = {{"times", s.times}, {"types", s.types}, {"t_end", s.t_end}};
    out << rec.dump() << '\n';
  }
  json meta = {{"name", dataset.name},
               {"split", to_string(dataset.split)},
               {"num_types", dataset.num_types},
               {"num_sequences", dataset.sequences.size()},
               {"num_events", dataset.num_events()}};
  std::ofstream mout(metadata_path(path));
  mout << meta.dump(2) << '\n';
}

std::array<Dataset, 3> split_dataset(const std::vector<EventSequence>& seqs,
                                     std::array<double, 3> ratios, std::uint64_t seed,
                                     int num_types, const std::string& name) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (ratios[0] <= 0.0 || ratios[1] <= 0.0 || ratios[2] <= 0.0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::BadRatios, "ratios must be positive and sum to 1");
  }
  const std::size_t n = seqs.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, {0x5b1u});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(perm[i - 1], perm[std::min(j, i - 1)]);
  }
  // The 1e-9 slack keeps exact fractions such as 200/1800 from flooring one short.
  const auto n_dev = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[1] + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[2] + 1e-9));
  const std::size_t n_train = n - n_dev - n_test;

  int k = num_types;
  if (k < 0) {
    k = 0;
    for (const auto& s : seqs)
      for (int t : s.types) k = std::max(k, t + 1);
  }
  std::array<Dataset, 3> out;
  const std::array<Split, 3> labels{Split::Train, Split::Dev, Split::Test};
  const std::array<std::size_t, 3> sizes{n_train, n_dev, n_test};
  std::size_t pos = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    out[s].split = labels[s];
    out[s].num_types = k;
    out[s].name = name;
    for (std::size_t i = 0; i < sizes[s]; ++i) out[s].sequences.push_back(seqs[perm[pos++]]);
  }
  return out;
}

std::size_t PaddedBatch::num_events() const {
  return std::accumulate(seq_lens.begin(), seq_lens.end(), std::size_t{0});
}

double PaddedBatch::interval_end(std::size_t b, std::size_t a) const {
  const std::size_t len = seq_lens[b];
  if (a > len) return anchor_time(b, std::min(a, len));
  if (a < len) return time(b, a);
  return t_end[b];
}

PaddedBatch pad_batch(const std::vector<EventSequence>& seqs, int num_types, int pad_type) {
  if (seqs.empty()) throw Error(ErrorCode::EmptyBatch, "pad_batch called with no sequences");
  if (pad_type < 0) pad_type = num_types;
  if (pad_type != num_types) {
    throw Error(ErrorCode::SchemaMismatch, "pad type must equal K");
  }
  PaddedBatch b;
  b.batch_size = seqs.size();
  b.num_types = num_types;
  b.pad_type = pad_type;
  for (const auto& s : seqs) b.max_len = std::max(b.max_len, s.size());
  const std::size_t cells = b.batch_size * b.max_len;
  b.times.assign(cells, 0.0);
  b.dtimes.assign(cells, 0.0);
  b.types.assign(cells, pad_type);
  b.seq_mask.assign(cells, 0);
  b.attn_mask.assign(cells * b.max_len, 0);
  b.seq_lens.resize(b.batch_size);
  b.t_end.resize(b.batch_size);
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    const auto& s = seqs[r];
    b.seq_lens[r] = s.size();
    b.t_end[r] = std::max(s.t_end, s.last_time());
    for (std::size_t j = 0; j < s.size(); ++j) {
      const std::size_t idx = b.index(r, j);
      b.times[idx] = s.times[j];
      b.dtimes[idx] = j == 0 ? s.times[0] : s.times[j] - s.times[j - 1];
      b.types[idx] = s.types[j];
      b.seq_mask[idx] = 1;
      for (std::size_t i = 0; i <= j; ++i) b.attn_mask[(r * b.max_len + j) * b.max_len + i] = 1;
    }
  }
  return b;
}

std::vector<EventSequence> unpad(const PaddedBatch& batch) {
  std::vector<EventSequence> out(batch.batch_size);
  for (std::size_t r = 0; r < batch.batch_size; ++r) {
    auto& s = out[r];
    for (std::size_t j = 0; j < batch.seq_lens[r]; ++j) {
      s.times.push_back(batch.time(r, j));
      s.types.push_back(batch.type(r, j));
    }
    s.t_end = batch.t_end[r];
  }
  return out;
}

}  // namespace tpp
