#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "artree/dsp.hpp"

namespace artree {

inline constexpr int kNumArtifactClasses = 12;  // labels 1..12; 0 = background

// Artifact interval on one channel, in seconds from recording start.
struct Annotation {
  int channel_index = 0;
  double start_s = 0.0;
  double stop_s = 0.0;
  int label = 0;  // 0 = background, 1..12 = artifact classes
};

enum class LabelScheme : std::uint8_t { BC = 0, MC = 1, MMC = 2 };

const char* to_string(LabelScheme scheme);
LabelScheme scheme_from_string(const std::string& name);

// Number of label outputs a scheme produces per window.
int scheme_outputs(LabelScheme scheme, int n_channels);
// Number of classes per output (2 for BC/MC, 13 for MMC).
int scheme_classes(LabelScheme scheme);

enum class FrequencyGroup : std::uint8_t { A, B, C, D, E };

const char* to_string(FrequencyGroup group);
FrequencyGroup group_from_string(const std::string& name);

struct AnnotatedRecording {
  Recording recording;
  std::vector<Annotation> annotations;
};

using Corpus = std::vector<AnnotatedRecording>;

// Directory of paired files: <base>.csv (header comment "# fs=<int>
// patient=<id>", then "time_s,ch0,..." rows) plus <base>.ann.csv
// ("channel,start_s,stop_s,label"). Files are read in sorted path order.
Corpus load_corpus(const std::filesystem::path& dir);
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

// Filter/unify sampling rates: A=250; B=250 plus 1000 decimated x4; C=256;
// D=256 plus 512 decimated x2; E=everything linearly resampled to 250 Hz.
// Annotations are in seconds and pass through unchanged.
Corpus extract_group(const Corpus& corpus, FrequencyGroup group);

// Per-window label parts. BC: one 0/1 value. MC: one 0/1 value per channel.
// MMC: one value in 0..12 per channel. A window counts as overlapping an
// annotation only when the intervals intersect with positive measure.
std::vector<std::vector<int>> assign_labels(const AnnotatedRecording& rec,
                                            LabelScheme scheme,
                                            const std::vector<Window>& windows);

struct SplitResult {
  Corpus train, val, test;
};

// Greedy assignment of whole patients to splits, in seeded-shuffle order,
// targeting window-count ratios. Every patient lands in exactly one split.
SplitResult split_patient_independent(const Corpus& corpus,
                                      std::array<double, 3> ratios,
                                      std::uint64_t seed);

struct SynthConfig {
  int n_patients = 8;
  int n_channels = 4;
  int fs = 250;
  double duration_s = 600.0;
  double artifact_rate = 0.3;  // target fraction of time covered by artifacts
  int class_count = 3;         // artifact classes 1..class_count
  std::uint64_t seed = 1;
};

// Deterministic synthetic corpus: band-limited background (<40 Hz tones plus
// white noise) with class-specific artifact signatures injected into
// annotated intervals. Class 1 = high-band tone burst, class 2 = broadband
// noise burst, class 3 = large low-frequency swing; further classes cycle
// through those signatures with shifted parameters.
Corpus synth_corpus(const SynthConfig& config);

// One row of the trainable feature table.
struct FeatureRow {
  std::string patient;
  double start_s = 0.0;
  FeatureVector features;
  std::vector<int> labels;  // arity per scheme
};

struct FeatureTable {
  LabelScheme scheme = LabelScheme::BC;
  int n_channels = 0;
  std::vector<FeatureRow> rows;

  int n_features() const { return kFeaturesPerChannel * n_channels; }
  int n_outputs() const { return scheme_outputs(scheme, n_channels); }
  int n_classes() const { return scheme_classes(scheme); }
};

// Windows a corpus, extracts features and labels. Parallel across windows;
// the result is independent of the thread count.
FeatureTable build_feature_table(const Corpus& corpus, LabelScheme scheme,
                                 unsigned threads);

// CSV with a "# scheme=<s> channels=<n>" comment line, then
// patient,start_s,<5xC feature columns>,<label columns>.
void write_feature_csv(const FeatureTable& table, std::ostream& out);
void write_feature_csv(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable read_feature_csv(const std::filesystem::path& path);

}  // namespace artree
