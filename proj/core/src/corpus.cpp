#include "cberl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

namespace cberl {

using nlohmann::json;

std::vector<int> Dialogue::speakers() const {
  std::set<int> s;
  for (const auto& u : utterances) s.insert(u.speaker);
  return {s.begin(), s.end()};
}

std::size_t Corpus::total_utterances() const {
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.utterances.size();
  return n;
}

void Corpus::validate() const {
  auto check_dim = [](const FeatureVector& f, int want, const char* name,
                      int utt) {
    if (static_cast<int>(f.values.size()) != want)
      throw DimensionMismatch(std::string(name) + " dim mismatch at utterance " +
                              std::to_string(utt) + ": expected " +
                              std::to_string(want) + ", found " +
                              std::to_string(f.values.size()));
    if (!f.values.allFinite())
      throw DimensionMismatch(std::string(name) + " has non-finite entries");
  };
  for (const auto& d : dialogues) {
    for (const auto& u : d.utterances) {
      check_dim(u.text, dims.d_w, "text", u.id);
      check_dim(u.audio, dims.d_a, "audio", u.id);
      check_dim(u.visual, dims.d_v, "visual", u.id);
      if (u.label < 0 || u.label >= num_classes)
        throw UnknownLabel("label " + std::to_string(u.label) +
                           " outside [0, " + std::to_string(num_classes) +
                           ") at utterance " + std::to_string(u.id));
    }
  }
}

void ImbalanceSpec::validate() const {
  if (class_proportions.empty())
    throw InvalidSpec("class_proportions must be nonempty");
  double sum = 0.0;
  for (double p : class_proportions) {
    if (p < 0.0) throw InvalidSpec("class proportions must be nonnegative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw InvalidSpec("class proportions must sum to 1");
  if (num_dialogues < 1) throw InvalidSpec("num_dialogues < 1");
  if (min_utterances < 1 || max_utterances < min_utterances)
    throw InvalidSpec("bad utterances_per_dialogue range");
  if (min_speakers < 1 || max_speakers < min_speakers)
    throw InvalidSpec("bad speakers_per_dialogue range");
  if (class_separation < 0.0) throw InvalidSpec("class_separation < 0");
  if (noise_scale <= 0.0) throw InvalidSpec("noise_scale must be > 0");
  if (label_run_length < 1.0) throw InvalidSpec("label_run_length < 1");
  if (long_tail) {
    const double mn =
        *std::min_element(class_proportions.begin(), class_proportions.end());
    if (mn > 0.05)
      throw InvalidSpec("long-tail spec needs a class at <= 5% prevalence");
  }
}

namespace {

Vec parse_vec(const json& arr) {
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<int>(i)] = arr[i];
  return v;
}

json dump_vec(const Vec& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& dir) {
  return load_corpus(dir / "utterances.jsonl", dir / "manifest.json");
}

Corpus load_corpus(const std::filesystem::path& jsonl,
                   const std::filesystem::path& manifest) {
  if (!std::filesystem::exists(manifest))
    throw MissingFile("manifest not found: " + manifest.string());
  if (!std::filesystem::exists(jsonl))
    throw MissingFile("corpus file not found: " + jsonl.string());

  std::ifstream mf(manifest);
  json m = json::parse(mf);
  Corpus corpus;
  corpus.num_classes = m.at("num_classes");
  corpus.class_names = m.at("class_names").get<std::vector<std::string>>();
  corpus.dims.d_w = m.at("d_w");
  corpus.dims.d_a = m.at("d_a");
  corpus.dims.d_v = m.at("d_v");

  std::ifstream in(jsonl);
  std::string line;
  std::vector<Dialogue> dialogues;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    const int did = rec.at("dialogue");
    auto it = std::find_if(dialogues.begin(), dialogues.end(),
                           [&](const Dialogue& d) { return d.id == did; });
    if (it == dialogues.end()) {
      dialogues.push_back(Dialogue{did, rec.value("session", 1), {}});
      it = std::prev(dialogues.end());
    }
    Utterance u;
    u.id = rec.at("utterance");
    u.speaker = rec.at("speaker");
    u.label = rec.at("label");
    u.synthetic = rec.value("synthetic", false);
    u.text = {parse_vec(rec.at("text")), Modality::kText};
    u.audio = {parse_vec(rec.at("audio")), Modality::kAudio};
    u.visual = {parse_vec(rec.at("visual")), Modality::kVisual};
    it->utterances.push_back(std::move(u));
  }
  corpus.dialogues = std::move(dialogues);
  corpus.validate();
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    json m;
    m["num_classes"] = corpus.num_classes;
    m["class_names"] = corpus.class_names;
    m["d_w"] = corpus.dims.d_w;
    m["d_a"] = corpus.dims.d_a;
    m["d_v"] = corpus.dims.d_v;
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << "\n";
  }
  std::ofstream out(dir / "utterances.jsonl");
  for (const auto& d : corpus.dialogues) {
    for (const auto& u : d.utterances) {
      json rec;
      rec["dialogue"] = d.id;
      rec["session"] = d.session;
      rec["utterance"] = u.id;
      rec["speaker"] = u.speaker;
      rec["label"] = u.label;
      rec["synthetic"] = u.synthetic;
      rec["text"] = dump_vec(u.text.values);
      rec["audio"] = dump_vec(u.audio.values);
      rec["visual"] = dump_vec(u.visual.values);
      out << rec.dump() << "\n";
    }
  }
}

namespace {

/// Largest-remainder apportionment of n over proportions p.
std::vector<long> apportion(const std::vector<double>& p, long n) {
  const int C = static_cast<int>(p.size());
  std::vector<long> counts(C);
  std::vector<std::pair<double, int>> rema(C);
  long assigned = 0;
  for (int c = 0; c < C; ++c) {
    const double exact = p[c] * static_cast<double>(n);
    counts[c] = static_cast<long>(std::floor(exact));
    assigned += counts[c];
    rema[c] = {exact - std::floor(exact), c};
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (long i = 0; i < n - assigned; ++i) counts[rema[i % C].second]++;
  return counts;
}

/// Random directions, orthonormalized when the dimension allows, scaled so
/// pairwise distances equal `sep`.
std::vector<Vec> class_means(int C, int dim, double sep, Rng& rng) {
  std::vector<Vec> dirs;
  for (int c = 0; c < C; ++c) {
    Vec v = rng.gaussian_vec(dim);
    if (dim >= C) {
      for (const Vec& u : dirs) v -= u.dot(v) * u;
    }
    const double n = v.norm();
    if (n > 1e-12) v /= n;
    dirs.push_back(v);
  }
  const double s = sep / std::sqrt(2.0);
  for (Vec& v : dirs) v *= s;
  return dirs;
}

}  // namespace

Corpus synthesize_corpus(const ImbalanceSpec& spec) {
  spec.validate();
  const int C = static_cast<int>(spec.class_proportions.size());
  Rng rng(spec.seed);

  Corpus corpus;
  corpus.num_classes = C;
  corpus.dims = spec.dims;
  corpus.class_names = spec.class_names;
  if (corpus.class_names.empty())
    for (int c = 0; c < C; ++c)
      corpus.class_names.push_back("class" + std::to_string(c));
  if (static_cast<int>(corpus.class_names.size()) != C)
    throw InvalidSpec("class_names size must match proportions");

  const auto mu_text = class_means(C, spec.dims.d_w, spec.class_separation, rng);
  const auto mu_audio =
      class_means(C, spec.dims.d_a, spec.class_separation, rng);
  const auto mu_visual =
      class_means(C, spec.dims.d_v, spec.class_separation, rng);

  std::vector<int> sizes(spec.num_dialogues);
  long total = 0;
  for (int d = 0; d < spec.num_dialogues; ++d) {
    sizes[d] = spec.min_utterances +
               rng.uniform_int(spec.max_utterances - spec.min_utterances + 1);
    total += sizes[d];
  }

  // Exact per-class budgets; within a dialogue labels persist with
  // probability 1 - 1/run_length, modelling emotional inertia.
  auto remaining = apportion(spec.class_proportions, total);
  long total_remaining = total;
  auto draw_label = [&]() {
    long k = rng.uniform_int(static_cast<int>(total_remaining));
    for (int c = 0; c < C; ++c) {
      if (k < remaining[c]) return c;
      k -= remaining[c];
    }
    return C - 1;
  };
  const double keep_prob =
      spec.label_run_length > 1.0 ? 1.0 - 1.0 / spec.label_run_length : 0.0;

  int next_utt = 0;
  for (int d = 0; d < spec.num_dialogues; ++d) {
    Dialogue dia;
    dia.id = d;
    dia.session = 1 + (d * spec.num_sessions) / spec.num_dialogues;
    const int nspk =
        spec.min_speakers +
        rng.uniform_int(spec.max_speakers - spec.min_speakers + 1);
    int prev = -1;
    for (int t = 0; t < sizes[d]; ++t) {
      Utterance u;
      u.id = next_utt++;
      u.speaker = rng.uniform_int(nspk);
      if (prev >= 0 && remaining[prev] > 0 && keep_prob > 0.0 &&
          rng.uniform() < keep_prob) {
        u.label = prev;
      } else {
        u.label = draw_label();
      }
      remaining[u.label]--;
      total_remaining--;
      prev = u.label;
      u.text = {mu_text[u.label] +
                    spec.noise_scale * rng.gaussian_vec(spec.dims.d_w),
                Modality::kText};
      u.audio = {mu_audio[u.label] +
                     spec.noise_scale * rng.gaussian_vec(spec.dims.d_a),
                 Modality::kAudio};
      u.visual = {mu_visual[u.label] +
                      spec.noise_scale * rng.gaussian_vec(spec.dims.d_v),
                  Modality::kVisual};
      dia.utterances.push_back(std::move(u));
    }
    corpus.dialogues.push_back(std::move(dia));
  }
  return corpus;
}

Histogram class_histogram(const Corpus& corpus) {
  Histogram h;
  h.counts.assign(corpus.num_classes, 0);
  for (const auto& d : corpus.dialogues)
    for (const auto& u : d.utterances) h.counts[u.label]++;
  const double total = static_cast<double>(corpus.total_utterances());
  h.proportions.assign(corpus.num_classes, 0.0);
  if (total > 0)
    for (int c = 0; c < corpus.num_classes; ++c)
      h.proportions[c] = static_cast<double>(h.counts[c]) / total;
  return h;
}

namespace {

Corpus subset(const Corpus& corpus, const std::vector<int>& dialogue_ids) {
  Corpus out;
  out.num_classes = corpus.num_classes;
  out.class_names = corpus.class_names;
  out.dims = corpus.dims;
  for (int id : dialogue_ids) out.dialogues.push_back(corpus.dialogues[id]);
  return out;
}

}  // namespace

CorpusSplit split(const Corpus& corpus, SplitPolicy policy,
                  std::uint64_t seed) {
  const int D = static_cast<int>(corpus.dialogues.size());
  Rng rng(derive_seed(seed, "corpus.split"));

  std::vector<int> train_pool, test_ids;
  if (policy == SplitPolicy::kRatio) {
    if (D < 3) throw TooFewDialogues("ratio split needs >= 3 dialogues");
    std::vector<int> order(D);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int n_test = std::max(1L, std::lround(0.2 * D));
    test_ids.assign(order.begin(), order.begin() + n_test);
    train_pool.assign(order.begin() + n_test, order.end());
  } else {
    std::set<int> sessions;
    for (const auto& d : corpus.dialogues) sessions.insert(d.session);
    if (sessions.size() < 2)
      throw TooFewDialogues("session split needs >= 2 session tags");
    const int last = *sessions.rbegin();
    for (int i = 0; i < D; ++i) {
      if (corpus.dialogues[i].session == last)
        test_ids.push_back(i);
      else
        train_pool.push_back(i);
    }
    rng.shuffle(train_pool);
  }

  if (train_pool.size() < 2)
    throw TooFewDialogues("not enough dialogues for train+val");
  const int n_val =
      std::max(1L, std::lround(0.1 * static_cast<double>(train_pool.size())));
  std::vector<int> val_ids(train_pool.begin(), train_pool.begin() + n_val);
  std::vector<int> train_ids(train_pool.begin() + n_val, train_pool.end());
  if (train_ids.empty()) throw TooFewDialogues("empty train split");

  // Stable order inside each part keeps reports reproducible.
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(test_ids.begin(), test_ids.end());
  return {subset(corpus, train_ids), subset(corpus, val_ids),
          subset(corpus, test_ids)};
}

ImbalanceSpec meld_like_spec() {
  ImbalanceSpec s;
  // Fig. 1(a) pins fear/disgust; the remaining five are approximations scaled
  // to fill the rest of the mass.
  s.class_proportions = {0.4764, 0.1722, 0.1176, 0.1170, 0.0716, 0.0261,
                         0.0191};
  s.class_names = {"neutral", "joy",     "surprise", "anger",
                   "sadness", "disgust", "fear"};
  s.long_tail = true;
  s.num_dialogues = 140;
  s.seed = 7;
  return s;
}

ImbalanceSpec longtail7_spec() {
  ImbalanceSpec s;
  s.class_proportions = {0.34, 0.22, 0.16, 0.12, 0.11, 0.03, 0.02};
  s.class_names = {"class0", "class1", "class2", "class3",
                   "class4", "minor5", "minor6"};
  s.long_tail = true;
  s.num_dialogues = 150;  // ~1500 utterances at the default size range
  s.min_utterances = 6;
  s.max_utterances = 14;
  s.class_separation = 2.4;
  s.noise_scale = 1.0;
  s.label_run_length = 2.5;
  s.seed = 11;
  return s;
}

Vec concat_features(const Utterance& u) {
  Vec out(u.text.values.size() + u.audio.values.size() +
          u.visual.values.size());
  out << u.text.values, u.audio.values, u.visual.values;
  return out;
}

}  // namespace cberl
