#include "artree/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "artree/errors.hpp"
#include "artree/parallel.hpp"
#include "artree/rng.hpp"

namespace artree {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void fail_parse(const std::filesystem::path& file, std::size_t line_no,
                             const std::string& what) {
  throw FormatError(file.string() + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& field, const std::filesystem::path& file,
                    std::size_t line_no) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail_parse(file, line_no, "bad number '" + field + "'");
  }
  return value;
}

long parse_int(const std::string& field, const std::filesystem::path& file,
               std::size_t line_no) {
  long value = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail_parse(file, line_no, "bad integer '" + field + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

AnnotatedRecording load_pair(const std::filesystem::path& signal_path,
                             const std::filesystem::path& ann_path) {
  AnnotatedRecording out;
  Recording& rec = out.recording;

  std::ifstream sig(signal_path);
  if (!sig) throw FormatError("cannot open " + signal_path.string());
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(sig, line)) fail_parse(signal_path, 1, "empty file");
  ++line_no;
  if (line.empty() || line[0] != '#') {
    fail_parse(signal_path, line_no, "expected '# fs=<int> patient=<id>' comment");
  }
  {
    std::istringstream meta(line.substr(1));
    std::string token;
    while (meta >> token) {
      if (token.rfind("fs=", 0) == 0) {
        rec.fs = static_cast<int>(parse_int(token.substr(3), signal_path, line_no));
      } else if (token.rfind("patient=", 0) == 0) {
        rec.patient_id = token.substr(8);
      }
    }
  }
  if (rec.fs <= 0) fail_parse(signal_path, line_no, "missing or invalid fs");
  if (rec.patient_id.empty()) fail_parse(signal_path, line_no, "missing patient id");

  if (!std::getline(sig, line)) fail_parse(signal_path, line_no + 1, "missing header row");
  ++line_no;
  auto header = split_csv(line);
  if (header.size() < 2 || header[0] != "time_s") {
    fail_parse(signal_path, line_no, "expected header 'time_s,ch0,...'");
  }
  rec.channel_names.assign(header.begin() + 1, header.end());
  rec.channels.assign(rec.channel_names.size(), {});

  while (std::getline(sig, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != header.size()) {
      fail_parse(signal_path, line_no, "row has " + std::to_string(fields.size()) +
                                           " fields, header has " +
                                           std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      rec.channels[c].push_back(parse_double(fields[c + 1], signal_path, line_no));
    }
  }
  if (rec.n_samples() == 0) fail_parse(signal_path, line_no, "no samples");

  std::ifstream ann(ann_path);
  if (!ann) throw FormatError("cannot open " + ann_path.string());
  line_no = 0;
  if (!std::getline(ann, line)) fail_parse(ann_path, 1, "empty annotation file");
  ++line_no;
  if (split_csv(line) != std::vector<std::string>{"channel", "start_s", "stop_s", "label"}) {
    fail_parse(ann_path, line_no, "expected header 'channel,start_s,stop_s,label'");
  }
  while (std::getline(ann, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 4) fail_parse(ann_path, line_no, "expected 4 fields");
    Annotation a;
    a.channel_index = static_cast<int>(parse_int(fields[0], ann_path, line_no));
    a.start_s = parse_double(fields[1], ann_path, line_no);
    a.stop_s = parse_double(fields[2], ann_path, line_no);
    a.label = static_cast<int>(parse_int(fields[3], ann_path, line_no));
    if (a.channel_index < 0 || a.channel_index >= static_cast<int>(rec.n_channels())) {
      fail_parse(ann_path, line_no, "channel " + std::to_string(a.channel_index) +
                                        " out of range for " +
                                        std::to_string(rec.n_channels()) + " channels");
    }
    if (a.label < 0 || a.label > kNumArtifactClasses) {
      fail_parse(ann_path, line_no, "unknown label id " + std::to_string(a.label));
    }
    if (!(a.start_s >= 0.0 && a.start_s < a.stop_s)) {
      fail_parse(ann_path, line_no, "invalid interval");
    }
    out.annotations.push_back(a);
  }
  return out;
}

}  // namespace

const char* to_string(LabelScheme scheme) {
  switch (scheme) {
    case LabelScheme::BC: return "bc";
    case LabelScheme::MC: return "mc";
    case LabelScheme::MMC: return "mmc";
  }
  return "?";
}

LabelScheme scheme_from_string(const std::string& name) {
  if (name == "bc") return LabelScheme::BC;
  if (name == "mc") return LabelScheme::MC;
  if (name == "mmc") return LabelScheme::MMC;
  throw std::invalid_argument("unknown scheme '" + name + "' (expected bc|mc|mmc)");
}

int scheme_outputs(LabelScheme scheme, int n_channels) {
  return scheme == LabelScheme::BC ? 1 : n_channels;
}

int scheme_classes(LabelScheme scheme) {
  return scheme == LabelScheme::MMC ? kNumArtifactClasses + 1 : 2;
}

const char* to_string(FrequencyGroup group) {
  switch (group) {
    case FrequencyGroup::A: return "a";
    case FrequencyGroup::B: return "b";
    case FrequencyGroup::C: return "c";
    case FrequencyGroup::D: return "d";
    case FrequencyGroup::E: return "e";
  }
  return "?";
}

FrequencyGroup group_from_string(const std::string& name) {
  if (name.size() == 1 && name[0] >= 'a' && name[0] <= 'e') {
    return static_cast<FrequencyGroup>(name[0] - 'a');
  }
  throw std::invalid_argument("unknown group '" + name + "' (expected a|b|c|d|e)");
}

Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw FormatError("corpus directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> signal_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (ends_with(name, ".csv") && !ends_with(name, ".ann.csv")) {
      signal_files.push_back(entry.path());
    }
  }
  std::sort(signal_files.begin(), signal_files.end());

  Corpus corpus(signal_files.size());
  parallel_chunks(signal_files.size(), 0, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::filesystem::path ann = signal_files[i];
      ann.replace_extension();  // strip .csv
      ann += ".ann.csv";
      corpus[i] = load_pair(signal_files[i], ann);
    }
  });
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& rec = corpus[i].recording;
    char base[64];
    std::snprintf(base, sizeof(base), "%s_r%03zu", rec.patient_id.c_str(), i);

    std::ofstream sig(dir / (std::string(base) + ".csv"), std::ios::binary);
    sig << "# fs=" << rec.fs << " patient=" << rec.patient_id << "\n";
    sig << "time_s";
    for (const auto& name : rec.channel_names) sig << ',' << name;
    sig << "\n";
    const std::size_t n = rec.n_samples();
    for (std::size_t t = 0; t < n; ++t) {
      sig << format_double(static_cast<double>(t) / rec.fs);
      for (const auto& ch : rec.channels) sig << ',' << format_double(ch[t]);
      sig << "\n";
    }

    std::ofstream ann(dir / (std::string(base) + ".ann.csv"), std::ios::binary);
    ann << "channel,start_s,stop_s,label\n";
    for (const auto& a : corpus[i].annotations) {
      ann << a.channel_index << ',' << format_double(a.start_s) << ','
          << format_double(a.stop_s) << ',' << a.label << "\n";
    }
  }
}

Corpus extract_group(const Corpus& corpus, FrequencyGroup group) {
  Corpus out;
  for (const auto& rec : corpus) {
    const int fs = rec.recording.fs;
    if (fs != 250 && fs != 256 && fs != 400 && fs != 512 && fs != 1000) {
      throw FormatError("recording '" + rec.recording.patient_id +
                        "' has unsupported sampling rate " + std::to_string(fs));
    }
    auto decimated = [&](int factor, int new_fs) {
      AnnotatedRecording r = rec;
      for (auto& ch : r.recording.channels) {
        ch = decimate(ch, static_cast<std::size_t>(factor));
      }
      r.recording.fs = new_fs;
      return r;
    };
    switch (group) {
      case FrequencyGroup::A:
        if (fs == 250) out.push_back(rec);
        break;
      case FrequencyGroup::B:
        if (fs == 250) out.push_back(rec);
        else if (fs == 1000) out.push_back(decimated(4, 250));
        break;
      case FrequencyGroup::C:
        if (fs == 256) out.push_back(rec);
        break;
      case FrequencyGroup::D:
        if (fs == 256) out.push_back(rec);
        else if (fs == 512) out.push_back(decimated(2, 256));
        break;
      case FrequencyGroup::E:
        if (fs == 250) {
          out.push_back(rec);
        } else {
          AnnotatedRecording r = rec;
          for (auto& ch : r.recording.channels) {
            ch = linear_resample(ch, fs, 250);
          }
          r.recording.fs = 250;
          out.push_back(std::move(r));
        }
        break;
    }
  }
  return out;
}

std::vector<std::vector<int>> assign_labels(const AnnotatedRecording& rec,
                                            LabelScheme scheme,
                                            const std::vector<Window>& windows) {
  const int n_channels = static_cast<int>(rec.recording.n_channels());
  std::vector<std::vector<int>> labels;
  labels.reserve(windows.size());
  std::vector<double> best_overlap(n_channels);
  std::vector<int> best_label(n_channels);

  for (const auto& window : windows) {
    const double w0 = window.start_s;
    const double w1 = window.start_s + 1.0;
    std::fill(best_overlap.begin(), best_overlap.end(), 0.0);
    std::fill(best_label.begin(), best_label.end(), 0);
    for (const auto& a : rec.annotations) {
      if (a.label == 0) continue;
      const double overlap = std::min(a.stop_s, w1) - std::max(a.start_s, w0);
      if (overlap <= 0.0) continue;  // positive measure only
      int& label = best_label[a.channel_index];
      double& best = best_overlap[a.channel_index];
      if (overlap > best || (overlap == best && label != 0 && a.label < label)) {
        best = overlap;
        label = a.label;
      }
    }
    switch (scheme) {
      case LabelScheme::BC: {
        const bool any = std::any_of(best_label.begin(), best_label.end(),
                                     [](int l) { return l > 0; });
        labels.push_back({any ? 1 : 0});
        break;
      }
      case LabelScheme::MC: {
        std::vector<int> row(n_channels);
        for (int c = 0; c < n_channels; ++c) row[c] = best_label[c] > 0 ? 1 : 0;
        labels.push_back(std::move(row));
        break;
      }
      case LabelScheme::MMC:
        labels.push_back(best_label);
        break;
    }
  }
  return labels;
}

SplitResult split_patient_independent(const Corpus& corpus,
                                      std::array<double, 3> ratios,
                                      std::uint64_t seed) {
  std::map<std::string, std::size_t> patient_windows;
  for (const auto& rec : corpus) {
    const auto& r = rec.recording;
    patient_windows[r.patient_id] += r.fs > 0 ? r.n_samples() / r.fs : 0;
  }
  if (patient_windows.size() < 3) {
    throw std::invalid_argument("split requires at least 3 distinct patients");
  }
  std::vector<std::string> patients;
  patients.reserve(patient_windows.size());
  for (const auto& [id, _] : patient_windows) patients.push_back(id);

  Rng rng(seed);
  rng.shuffle(patients);

  double total = 0.0;
  for (const auto& [_, w] : patient_windows) total += static_cast<double>(w);
  const std::array<double, 3> targets = {ratios[0] * total, ratios[1] * total,
                                         ratios[2] * total};
  std::array<double, 3> assigned = {0.0, 0.0, 0.0};
  std::map<std::string, int> destination;
  for (const auto& id : patients) {
    int best = 0;
    double best_deficit = targets[0] - assigned[0];
    for (int s = 1; s < 3; ++s) {
      const double deficit = targets[s] - assigned[s];
      if (deficit > best_deficit) {
        best = s;
        best_deficit = deficit;
      }
    }
    destination[id] = best;
    assigned[best] += static_cast<double>(patient_windows[id]);
  }

  SplitResult result;
  for (const auto& rec : corpus) {
    switch (destination[rec.recording.patient_id]) {
      case 0: result.train.push_back(rec); break;
      case 1: result.val.push_back(rec); break;
      case 2: result.test.push_back(rec); break;
    }
  }
  return result;
}

namespace {

// Artifact signatures cycle through three spectral shapes. intensity scales
// the whole event; weak events sit near the background floor, which is what
// keeps the classification problem from being trivially separable.
void inject_artifact(std::vector<double>& samples, int fs, int cls, double t0,
                     double t1, double intensity, Rng& rng) {
  const auto s0 = static_cast<std::size_t>(std::ceil(t0 * fs));
  const auto s1 = std::min(samples.size(), static_cast<std::size_t>(std::floor(t1 * fs)));
  const int kind = (cls - 1) % 3;
  const double tier = intensity * (1.0 + 0.15 * ((cls - 1) / 3));
  switch (kind) {
    case 0: {  // high-band tone burst, well above the 80 Hz cutoff
      const double freq = rng.uniform(82.0, std::min(118.0, 0.47 * fs));
      const double amp = tier * rng.uniform(15.0, 30.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t s = s0; s < s1; ++s) {
        samples[s] += amp * std::sin(2.0 * std::numbers::pi * freq * s / fs + phase);
      }
      break;
    }
    case 1: {  // broadband noise burst (EMG-like)
      const double sigma = tier * rng.uniform(20.0, 40.0);
      for (std::size_t s = s0; s < s1; ++s) samples[s] += sigma * rng.normal();
      break;
    }
    case 2: {  // large low-frequency swing (movement-like)
      const double freq = rng.uniform(0.5, 3.0);
      const double amp = tier * rng.uniform(150.0, 250.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t s = s0; s < s1; ++s) {
        samples[s] += amp * std::sin(2.0 * std::numbers::pi * freq * s / fs + phase);
      }
      break;
    }
  }
}

}  // namespace

Corpus synth_corpus(const SynthConfig& config) {
  if (config.n_patients < 1 || config.n_channels < 1 || config.fs < 2 ||
      config.duration_s < 1.0 || config.class_count < 1 ||
      config.class_count > kNumArtifactClasses || config.artifact_rate < 0.0 ||
      config.artifact_rate > 0.9) {
    throw std::invalid_argument("synth_corpus: invalid config");
  }
  Corpus corpus;
  corpus.reserve(config.n_patients);
  Rng master(config.seed);

  for (int p = 0; p < config.n_patients; ++p) {
    Rng rng(master.next_u64());
    AnnotatedRecording entry;
    Recording& rec = entry.recording;
    rec.fs = config.fs;
    char id[16];
    std::snprintf(id, sizeof(id), "p%02d", p);
    rec.patient_id = id;
    const auto n = static_cast<std::size_t>(std::llround(config.duration_s * config.fs));
    rec.channels.assign(config.n_channels, std::vector<double>(n, 0.0));
    rec.channel_names.resize(config.n_channels);
    for (int c = 0; c < config.n_channels; ++c) {
      rec.channel_names[c] = "ch" + std::to_string(c);
    }

    // Background: three sub-40 Hz tones plus white noise, per channel.
    for (auto& channel : rec.channels) {
      double freq[3], amp[3], phase[3];
      for (int j = 0; j < 3; ++j) {
        freq[j] = rng.uniform(1.0, 40.0);
        amp[j] = rng.uniform(2.0, 6.0);
        phase[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
      for (std::size_t t = 0; t < n; ++t) {
        double v = 10.0 * rng.normal();
        for (int j = 0; j < 3; ++j) {
          v += amp[j] * std::sin(2.0 * std::numbers::pi * freq[j] * t / config.fs + phase[j]);
        }
        channel[t] = v;
      }
    }

    // Artifact events until the target time coverage is reached.
    const double target = config.artifact_rate * config.duration_s;
    double covered = 0.0;
    double t = rng.uniform(0.5, 3.0);
    std::vector<int> channel_order(config.n_channels);
    for (int c = 0; c < config.n_channels; ++c) channel_order[c] = c;
    while (covered < target && t + 1.0 < config.duration_s - 0.5) {
      double len = rng.uniform(3.0, 6.0);
      len = std::min(len, config.duration_s - 0.5 - t);
      const int cls = 1 + static_cast<int>(rng.below(config.class_count));
      const int hits = 1 + static_cast<int>(rng.below(std::min(2, config.n_channels)));
      const double intensity = rng.uniform(0.14, 1.25);
      rng.shuffle(channel_order);
      for (int h = 0; h < hits; ++h) {
        const int c = channel_order[h];
        inject_artifact(rec.channels[c], config.fs, cls, t, t + len, intensity, rng);
        entry.annotations.push_back({c, t, t + len, cls});
      }
      covered += len;
      t += len + rng.uniform(1.0, 4.0);
    }
    corpus.push_back(std::move(entry));
  }
  return corpus;
}

FeatureTable build_feature_table(const Corpus& corpus, LabelScheme scheme,
                                 unsigned threads) {
  FeatureTable table;
  table.scheme = scheme;

  struct WindowRef {
    std::size_t rec;
    std::size_t window;
  };
  std::vector<std::vector<Window>> windows(corpus.size());
  std::vector<std::vector<std::vector<int>>> labels(corpus.size());
  std::vector<WindowRef> refs;

  for (std::size_t r = 0; r < corpus.size(); ++r) {
    const auto& rec = corpus[r].recording;
    if (table.n_channels == 0) {
      table.n_channels = static_cast<int>(rec.n_channels());
    } else if (table.n_channels != static_cast<int>(rec.n_channels())) {
      throw FormatError("corpus channel counts differ across recordings");
    }
    if (rec.n_samples() < static_cast<std::size_t>(rec.fs)) continue;
    windows[r] = split_windows(rec);
    labels[r] = assign_labels(corpus[r], scheme, windows[r]);
    for (std::size_t w = 0; w < windows[r].size(); ++w) refs.push_back({r, w});
  }

  table.rows.resize(refs.size());
  parallel_chunks(refs.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto [r, w] = refs[i];
      FeatureRow& row = table.rows[i];
      row.patient = corpus[r].recording.patient_id;
      row.start_s = windows[r][w].start_s;
      row.features = extract_features(windows[r][w]);
      row.labels = labels[r][w];
    }
  });
  return table;
}

void write_feature_csv(const FeatureTable& table, std::ostream& out) {
  out << "# scheme=" << to_string(table.scheme) << " channels=" << table.n_channels
      << "\n";
  out << "patient,start_s";
  for (int c = 0; c < table.n_channels; ++c) {
    out << ",ch" << c << "_fft_hi";
    for (int d = 1; d <= kDwtLevels; ++d) out << ",ch" << c << "_dwt" << d;
  }
  const int outputs = table.n_outputs();
  if (table.scheme == LabelScheme::BC) {
    out << ",label";
  } else {
    for (int o = 0; o < outputs; ++o) out << ",label_ch" << o;
  }
  out << "\n";
  for (const auto& row : table.rows) {
    out << row.patient << ',' << format_double(row.start_s);
    for (double v : row.features.values) out << ',' << format_double(v);
    for (int label : row.labels) out << ',' << label;
    out << "\n";
  }
}

void write_feature_csv(const FeatureTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_feature_csv(table, out);
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  FeatureTable table;
  std::string line;
  std::size_t line_no = 0;

  if (!std::getline(in, line)) fail_parse(path, 1, "empty file");
  ++line_no;
  if (line.rfind("# scheme=", 0) != 0) {
    fail_parse(path, line_no, "expected '# scheme=<s> channels=<n>' comment");
  }
  {
    std::istringstream meta(line.substr(1));
    std::string token;
    bool have_scheme = false, have_channels = false;
    while (meta >> token) {
      if (token.rfind("scheme=", 0) == 0) {
        table.scheme = scheme_from_string(token.substr(7));
        have_scheme = true;
      } else if (token.rfind("channels=", 0) == 0) {
        table.n_channels = static_cast<int>(parse_int(token.substr(9), path, line_no));
        have_channels = true;
      }
    }
    if (!have_scheme || !have_channels || table.n_channels < 1) {
      fail_parse(path, line_no, "invalid scheme/channels metadata");
    }
  }

  if (!std::getline(in, line)) fail_parse(path, line_no + 1, "missing header");
  ++line_no;
  const std::size_t expected =
      2 + static_cast<std::size_t>(table.n_features()) +
      static_cast<std::size_t>(table.n_outputs());
  if (split_csv(line).size() != expected) {
    fail_parse(path, line_no, "header column count does not match scheme/channels");
  }

  const int n_features = table.n_features();
  const int n_outputs = table.n_outputs();
  const int n_classes = table.n_classes();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != expected) {
      fail_parse(path, line_no, "row column count mismatch");
    }
    FeatureRow row;
    row.patient = fields[0];
    row.start_s = parse_double(fields[1], path, line_no);
    row.features.values.resize(n_features);
    for (int f = 0; f < n_features; ++f) {
      row.features.values[f] = parse_double(fields[2 + f], path, line_no);
    }
    row.labels.resize(n_outputs);
    for (int o = 0; o < n_outputs; ++o) {
      const long v = parse_int(fields[2 + n_features + o], path, line_no);
      if (v < 0 || v >= n_classes) {
        fail_parse(path, line_no, "label " + std::to_string(v) + " out of range");
      }
      row.labels[o] = static_cast<int>(v);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace artree
