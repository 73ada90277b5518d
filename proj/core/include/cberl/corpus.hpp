#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cberl/errors.hpp"
#include "cberl/rng.hpp"

namespace cberl {

enum class Modality { kText, kAudio, kVisual };

struct FeatureVector {
  Vec values;
  Modality modality = Modality::kText;

  bool operator==(const FeatureVector& o) const {
    return modality == o.modality && values.size() == o.values.size() &&
           values == o.values;
  }
};

struct Utterance {
  int id = 0;
  int speaker = 0;
  FeatureVector text{{}, Modality::kText};
  FeatureVector audio{{}, Modality::kAudio};
  FeatureVector visual{{}, Modality::kVisual};
  int label = 0;
  bool synthetic = false;

  bool operator==(const Utterance& o) const = default;
};

struct Dialogue {
  int id = 0;
  int session = 1;
  std::vector<Utterance> utterances;

  std::vector<int> speakers() const;
  bool operator==(const Dialogue& o) const = default;
};

struct CorpusDims {
  int d_w = 16;
  int d_a = 16;
  int d_v = 32;
  bool operator==(const CorpusDims&) const = default;
};

/// Paper-scale feature dimensions.
inline CorpusDims paper_dims() { return {100, 100, 512}; }

struct Corpus {
  std::vector<Dialogue> dialogues;
  int num_classes = 0;
  std::vector<std::string> class_names;
  CorpusDims dims;

  std::size_t total_utterances() const;
  /// Throws DimensionMismatch / UnknownLabel on malformed content.
  void validate() const;
  bool operator==(const Corpus& o) const = default;
};

struct ImbalanceSpec {
  std::vector<double> class_proportions;
  int num_dialogues = 100;
  int min_utterances = 6;
  int max_utterances = 14;
  int min_speakers = 1;
  int max_speakers = 3;
  int num_sessions = 5;
  double class_separation = 3.0;
  double noise_scale = 1.0;
  /// Mean length of same-label runs inside a dialogue (1 = labels i.i.d.).
  /// Models emotional persistence; global class counts stay exact either way.
  double label_run_length = 1.0;
  std::uint64_t seed = 0;
  bool long_tail = false;
  CorpusDims dims;
  std::vector<std::string> class_names;  // autogenerated when empty

  void validate() const;  // throws InvalidSpec
};

/// Directory layout: manifest.json + utterances.jsonl.
Corpus load_corpus(const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& jsonl,
                   const std::filesystem::path& manifest);
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Class-conditional Gaussian clusters; per-class, per-modality means are
/// orthonormal directions scaled so that pairwise mean distance equals
/// class_separation (when the feature dim allows orthonormalization).
Corpus synthesize_corpus(const ImbalanceSpec& spec);

struct Histogram {
  std::vector<long> counts;
  std::vector<double> proportions;
};
Histogram class_histogram(const Corpus& corpus);

enum class SplitPolicy { kRatio, kSession };

struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

/// Splits whole dialogues. Ratio policy: 80:20 train-pool:test, then 10% of
/// the pool to validation. Session policy: the highest session tag is the
/// test set.
CorpusSplit split(const Corpus& corpus, SplitPolicy policy,
                  std::uint64_t seed);

/// Approximation of the MELD label proportions (the two minority classes are
/// pinned at their published ratios; the rest are rounded from public stats).
ImbalanceSpec meld_like_spec();

/// Seven-class long-tail preset used by the directional experiments:
/// two classes at <= 3% prevalence, ~1500 utterances.
ImbalanceSpec longtail7_spec();

/// Feature matrix of one utterance's concatenated modalities (text:audio:visual).
Vec concat_features(const Utterance& u);

}  // namespace cberl
