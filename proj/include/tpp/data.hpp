#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace tpp {

/// Time-ordered marks (t_i, k_i) observed on [0, t_end].
struct EventSequence {
  std::vector<double> times;
  std::vector<int> types;
  double t_end = 0.0;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  double last_time() const { return times.empty() ? 0.0 : times.back(); }

  /// Throws NonMonotoneTimestamps / SchemaMismatch / TypeOutOfRange.
  /// `num_types` < 0 skips the type range check.
  void validate(int num_types = -1) const;

  /// Prefix holding the first n events, with t_end set to the n-th event time.
  EventSequence prefix(std::size_t n) const;

  bool operator==(const EventSequence&) const = default;
};

enum class Split { Train, Dev, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct Dataset {
  std::vector<EventSequence> sequences;
  int num_types = 0;
  Split split = Split::Train;
  std::string name;

  std::size_t num_events() const;
  /// Mean inter-event gap over all events (dtime of the first event counts from 0).
  double mean_dtime() const;
};

/// Field names of the JSON Lines records.
struct DatasetSchema {
  std::string times_field = "times";
  std::string types_field = "types";
  std::string t_end_field = "t_end";
  /// When unset, K comes from the sidecar metadata if present, else max type + 1.
  std::optional<int> num_types;
  Split split = Split::Train;
};

Dataset load_dataset(const std::filesystem::path& path, const DatasetSchema& schema = {});

/// Writes JSON Lines plus a `<path>.meta.json` sidecar with K and counts.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);

std::filesystem::path metadata_path(const std::filesystem::path& dataset_path);

/// Seeded permutation, floor per split with the remainder assigned to train.
std::array<Dataset, 3> split_dataset(const std::vector<EventSequence>& seqs,
                                     std::array<double, 3> ratios, std::uint64_t seed,
                                     int num_types = -1, const std::string& name = "");

/// Row-major padded batch. Padded cells hold time 0 and type `pad_type` (== K).
struct PaddedBatch {
  std::size_t batch_size = 0;
  std::size_t max_len = 0;
  int num_types = 0;
  int pad_type = 0;
  std::vector<double> times;      // B x L
  std::vector<double> dtimes;     // B x L
  std::vector<int> types;         // B x L
  std::vector<std::uint8_t> seq_mask;   // B x L
  std::vector<std::uint8_t> attn_mask;  // B x L x L
  std::vector<std::size_t> seq_lens;    // B
  std::vector<double> t_end;            // B

  std::size_t index(std::size_t b, std::size_t j) const { return b * max_len + j; }
  double time(std::size_t b, std::size_t j) const { return times[index(b, j)]; }
  double dtime(std::size_t b, std::size_t j) const { return dtimes[index(b, j)]; }
  int type(std::size_t b, std::size_t j) const { return types[index(b, j)]; }
  bool mask(std::size_t b, std::size_t j) const { return seq_mask[index(b, j)] != 0; }
  bool attn(std::size_t b, std::size_t i, std::size_t j) const {
    return attn_mask[(b * max_len + i) * max_len + j] != 0;
  }
  std::size_t num_events() const;

  /// Time of anchor a of row b: 0 for a == 0, else t_a (1-based event index).
  double anchor_time(std::size_t b, std::size_t a) const {
    return a == 0 ? 0.0 : time(b, a - 1);
  }
  /// End of the interval that starts at anchor a: t_{a+1}, or t_end after the
  /// last event. Zero-length for anchors past the end of the row.
  double interval_end(std::size_t b, std::size_t a) const;
  bool anchor_valid(std::size_t b, std::size_t a) const { return a <= seq_lens[b]; }
};

/// Throws EmptyBatch on an empty list. `pad_type` < 0 means K.
PaddedBatch pad_batch(const std::vector<EventSequence>& seqs, int num_types, int pad_type = -1);

std::vector<EventSequence> unpad(const PaddedBatch& batch);

}  // namespace tpp
