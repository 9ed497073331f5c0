// pipeline.cc

// Copyright 2026  The laud authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "laud/pipeline.h"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <spdlog/spdlog.h>

#include "laud/eval.h"
#include "laud/features.h"
#include "laud/io.h"

namespace laud {

namespace fs = std::filesystem;

namespace {

const char *const kModelNames[] = {"baseline", "robust"};
const char *const kReferenceDir = "reference";
const char *const kInputLayer = "input";
const char *const kOutputLayer = "output";

std::string Trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> SplitList(const std::string &s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string JoinList(const std::vector<std::string> &v, const std::string &sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string Exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::optional<double> ParseReal(const std::string &s) {
  if (s.empty()) return std::nullopt;
  char *end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <typename T>
std::optional<T> ParseInt(const std::string &s) {
  T v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<NoiseKind> ParseNoiseKind(const std::string &s) {
  if (s == "white") return NoiseKind::kWhite;
  if (s == "pink") return NoiseKind::kPink;
  if (s == "babble") return NoiseKind::kBabble;
  if (s == "music") return NoiseKind::kMusic;
  return std::nullopt;
}

// Typed access to the INI tree that records problems instead of throwing,
// so that a single validation pass can report all of them.
class IniReader {
 public:
  using Tree = boost::property_tree::ptree;

  IniReader(const Tree &tree, std::vector<std::string> *errors)
      : tree_(tree), errors_(errors) {}

  std::optional<std::string> Raw(const std::string &section, const std::string &key) const {
    const auto sec = tree_.find(section);
    if (sec == tree_.not_found()) return std::nullopt;
    const auto it = sec->second.find(key);
    if (it == sec->second.not_found()) return std::nullopt;
    return Trim(it->second.data());
  }

  std::string String(const std::string &section, const std::string &key,
                     const std::string &def) const {
    return Raw(section, key).value_or(def);
  }

  std::string Choice(const std::string &section, const std::string &key,
                     const std::string &def, const std::vector<std::string> &options) const {
    const std::string v = String(section, key, def);
    if (std::find(options.begin(), options.end(), v) == options.end())
      Error(section, key, "'" + v + "' is not one of " + JoinList(options, "|"));
    return v;
  }

  int Int(const std::string &section, const std::string &key, int def, int lo) const {
    const auto raw = Raw(section, key);
    if (!raw) return def;
    const auto v = ParseInt<int>(*raw);
    if (!v) {
      Error(section, key, "'" + *raw + "' is not an integer");
      return def;
    }
    if (*v < lo) Error(section, key, "must be at least " + std::to_string(lo));
    return *v;
  }

  double Real(const std::string &section, const std::string &key, double def,
              std::optional<double> lo_exclusive, std::optional<double> hi = std::nullopt) const {
    const auto raw = Raw(section, key);
    if (!raw) return def;
    const auto v = ParseReal(*raw);
    if (!v) {
      Error(section, key, "'" + *raw + "' is not a finite number");
      return def;
    }
    if (lo_exclusive && !(*v > *lo_exclusive))
      Error(section, key, "must be greater than " + Num(*lo_exclusive));
    if (hi && *v > *hi) Error(section, key, "must be at most " + Num(*hi));
    return *v;
  }

  std::vector<std::string> List(const std::string &section, const std::string &key,
                                const std::vector<std::string> &def) const {
    const auto raw = Raw(section, key);
    return raw ? SplitList(*raw) : def;
  }

  void Error(const std::string &section, const std::string &key, const std::string &what) const {
    errors_->push_back("[" + section + "] " + key + ": " + what);
  }

 private:
  const Tree &tree_;
  std::vector<std::string> *errors_;
};

const std::map<std::string, std::set<std::string>> &KnownKeys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"output_dir", "seed"}},
      {"corpus",
       {"source", "speakers", "train_utterances_per_speaker", "test_utterances_per_speaker",
        "tokens_per_utterance", "vocabulary_size", "train_manifest", "test_manifest"}},
      {"noise", {"source", "train", "test", "seconds"}},
      {"asr", {"encoder", "hidden", "conv_channels", "models"}},
      {"train", {"epochs", "batch_size", "lr", "clip_norm", "snr_min_db", "snr_max_db",
                 "augment_prob"}},
      {"probe", {"layers", "d_proj", "epochs", "batch_frames", "lr", "lr_decay"}},
      {"eval", {"conditions", "pairs_per_class", "griffin_lim_iters"}},
  };
  return keys;
}

std::string Resolve(const std::string &base_dir, const std::string &p) {
  if (p.empty()) return p;
  const fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path.lexically_normal().string();
  return (fs::path(base_dir) / path).lexically_normal().string();
}

std::string Stem(const std::string &path) { return fs::path(path).stem().string(); }

std::string ReadText(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> ReadCsv(const std::string &path) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(ReadText(path));
  std::string line;
  bool header = true;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    rows.push_back(fields);
  }
  return rows;
}

Waveform ReadCanonical(const std::string &path) {
  Waveform w = ReadWav(path);
  if (w.sample_rate_hz != kCanonicalSampleRate) w = Resample(w, kCanonicalSampleRate);
  return w;
}

Waveform TrimTo(const Waveform &w, std::size_t n) {
  Waveform out = w;
  out.samples.resize(std::min(n, w.size()));
  return out;
}

Matrix StaticLogMel(const Waveform &w) { return Frontend::Default().LogMel(w, false).frames; }

double Mean(const std::vector<double> &v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

Condition Condition::Parse(const std::string &text) {
  Condition c;
  c.label = Trim(text);
  if (c.label == "clean") return c;
  std::string num = c.label;
  if (num.size() > 2 && num.compare(num.size() - 2, 2, "dB") == 0) num.resize(num.size() - 2);
  const auto v = ParseReal(num);
  if (!v) Fail(ErrorKind::kConfig, "condition '" + text + "' is neither clean nor an SNR like 10dB");
  c.clean = false;
  c.snr_db = *v;
  c.label = num + "dB";
  return c;
}

RunConfig RunConfig::Load(const std::string &path) {
  if (!fs::exists(path)) Fail(ErrorKind::kConfig, "config file " + path + " does not exist");
  return Parse(ReadText(path), fs::absolute(path).parent_path().string());
}

RunConfig RunConfig::Parse(const std::string &text, const std::string &base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error &e) {
    Fail(ErrorKind::kConfig, "line " + std::to_string(e.line()) + ": " + e.message());
  }

  std::vector<std::string> errors;
  for (const auto &[section, body] : tree) {
    const auto known = KnownKeys().find(section);
    if (body.empty()) {
      errors.push_back("key '" + section + "' outside of any section");
      continue;
    }
    if (known == KnownKeys().end()) {
      errors.push_back("unknown section [" + section + "]");
      continue;
    }
    for (const auto &[key, value] : body)
      if (!known->second.count(key)) errors.push_back("[" + section + "] unknown key '" + key + "'");
  }

  IniReader r(tree, &errors);
  RunConfig c;

  c.output_dir = Resolve(base_dir, r.String("run", "output_dir", ""));
  if (c.output_dir.empty()) r.Error("run", "output_dir", "required");
  if (const auto seed = r.Raw("run", "seed")) {
    const auto v = ParseInt<std::uint64_t>(*seed);
    if (!v) r.Error("run", "seed", "'" + *seed + "' is not a non-negative integer");
    else c.seed = *v;
  } else {
    r.Error("run", "seed", "required (there is no default seed)");
  }

  c.corpus_source = r.Choice("corpus", "source", "synth", {"synth", "manifest"});
  c.speakers = r.Int("corpus", "speakers", c.speakers, 2);
  c.train_per_speaker = r.Int("corpus", "train_utterances_per_speaker", c.train_per_speaker, 1);
  c.test_per_speaker = r.Int("corpus", "test_utterances_per_speaker", c.test_per_speaker, 2);
  c.tokens_per_utterance = r.Int("corpus", "tokens_per_utterance", c.tokens_per_utterance, 1);
  c.vocabulary_size = r.Int("corpus", "vocabulary_size", c.vocabulary_size, 1);
  c.train_manifest = Resolve(base_dir, r.String("corpus", "train_manifest", ""));
  c.test_manifest = Resolve(base_dir, r.String("corpus", "test_manifest", ""));
  if (c.corpus_source == "manifest") {
    for (const auto &[key, p] : {std::pair<std::string, std::string>{"train_manifest", c.train_manifest},
                                 {"test_manifest", c.test_manifest}}) {
      if (p.empty()) r.Error("corpus", key, "required when source = manifest");
      else if (!fs::exists(p)) r.Error("corpus", key, p + " does not exist");
    }
  }

  c.noise_source = r.Choice("noise", "source", "synth", {"synth", "files"});
  c.train_noise = r.List("noise", "train", c.train_noise);
  c.test_noise = r.List("noise", "test", c.test_noise);
  c.noise_seconds = r.Real("noise", "seconds", c.noise_seconds, 0.0);
  for (auto *list : {&c.train_noise, &c.test_noise}) {
    const std::string key = list == &c.train_noise ? "train" : "test";
    for (std::string &n : *list) {
      if (c.noise_source == "synth") {
        if (!ParseNoiseKind(n)) r.Error("noise", key, "unknown noise kind '" + n + "' (white|pink|babble|music)");
      } else {
        n = Resolve(base_dir, n);
        if (!fs::exists(n)) r.Error("noise", key, n + " does not exist");
      }
    }
  }

  const std::string encoder = r.Choice("asr", "encoder", "recurrent", {"recurrent", "conv"});
  c.arch.kind = encoder == "conv" ? EncoderKind::kConvFront : EncoderKind::kRecurrent;
  c.arch.hidden = r.Int("asr", "hidden", c.arch.hidden, 1);
  if (const auto raw = r.Raw("asr", "conv_channels")) {
    std::vector<int> ch;
    for (const std::string &s : SplitList(*raw)) {
      const auto v = ParseInt<int>(s);
      if (!v || *v <= 0) r.Error("asr", "conv_channels", "'" + s + "' is not a positive integer");
      else ch.push_back(*v);
    }
    if (ch.size() != 4) r.Error("asr", "conv_channels", "needs exactly 4 values");
    else c.arch.conv_channels = ch;
  }
  c.models = r.List("asr", "models", c.models);
  if (c.models.empty()) r.Error("asr", "models", "at least one model is required");
  for (const std::string &m : c.models)
    if (std::find(std::begin(kModelNames), std::end(kModelNames), m) == std::end(kModelNames))
      r.Error("asr", "models", "unknown model '" + m + "' (baseline|robust)");
  if (std::set<std::string>(c.models.begin(), c.models.end()).size() != c.models.size())
    r.Error("asr", "models", "duplicate model");

  c.train.epochs = r.Int("train", "epochs", c.train.epochs, 1);
  c.train.batch_size = r.Int("train", "batch_size", c.train.batch_size, 1);
  c.train.lr = r.Real("train", "lr", c.train.lr, 0.0);
  c.train.clip_norm = r.Real("train", "clip_norm", c.train.clip_norm, 0.0);
  c.train.snr_min_db = r.Real("train", "snr_min_db", c.train.snr_min_db, std::nullopt);
  c.train.snr_max_db = r.Real("train", "snr_max_db", c.train.snr_max_db, std::nullopt);
  c.train.augment_prob = r.Real("train", "augment_prob", c.train.augment_prob, std::nullopt, 1.0);
  if (c.train.augment_prob < 0.0) r.Error("train", "augment_prob", "must be at least 0");
  if (c.train.snr_min_db > c.train.snr_max_db) r.Error("train", "snr_min_db", "exceeds snr_max_db");
  const bool robust = std::find(c.models.begin(), c.models.end(), "robust") != c.models.end();
  if (robust && c.train_noise.empty()) r.Error("noise", "train", "the robust model needs training noise");

  const std::vector<std::string> layers = r.List("probe", "layers", {"all"});
  if (!(layers.size() == 1 && layers[0] == "all")) {
    for (const std::string &l : layers) {
      if (l != kFeaturesTag && !c.arch.HasLayer(l))
        r.Error("probe", "layers", "unknown layer '" + l + "' for this encoder (have " +
                                       JoinList(c.arch.LayerTags()) + ", features)");
    }
    c.layers = layers;
    if (layers.empty()) r.Error("probe", "layers", "empty");
  }
  c.probe.d_proj = r.Int("probe", "d_proj", c.probe.d_proj, 1);
  c.probe.epochs = r.Int("probe", "epochs", c.probe.epochs, 1);
  c.probe.batch_frames = r.Int("probe", "batch_frames", c.probe.batch_frames, 1);
  c.probe.lr = r.Real("probe", "lr", c.probe.lr, 0.0);
  c.probe.lr_decay = r.Real("probe", "lr_decay", c.probe.lr_decay, 0.0, 1.0);

  std::set<std::string> seen;
  for (const std::string &s : r.List("eval", "conditions", {"clean", "20dB", "10dB", "0dB"})) {
    try {
      const Condition cond = Condition::Parse(s);
      if (!seen.insert(cond.label).second) r.Error("eval", "conditions", "duplicate " + cond.label);
      c.conditions.push_back(cond);
    } catch (const laud::Error &e) {
      r.Error("eval", "conditions", e.what());
    }
  }
  if (c.conditions.empty()) r.Error("eval", "conditions", "at least one condition is required");
  const bool noisy = std::any_of(c.conditions.begin(), c.conditions.end(),
                                 [](const Condition &x) { return !x.clean; });
  if (noisy && c.test_noise.empty()) r.Error("noise", "test", "noisy conditions need test noise");
  c.pairs_per_class = r.Int("eval", "pairs_per_class", c.pairs_per_class, 1);
  c.griffin_lim_iters = r.Int("eval", "griffin_lim_iters", c.griffin_lim_iters, 1);

  if (!errors.empty()) {
    std::string msg = std::to_string(errors.size()) + " problem(s) in config:";
    for (const std::string &e : errors) msg += "\n  " + e;
    Fail(ErrorKind::kConfig, msg);
  }
  return c;
}

std::string RunConfig::ToIni() const {
  std::ostringstream os;
  std::vector<std::string> ch;
  for (int x : arch.conv_channels) ch.push_back(std::to_string(x));
  std::vector<std::string> conds;
  for (const Condition &x : conditions) conds.push_back(x.label);
  os << "[run]\nseed = " << seed << "\n\n";
  os << "[corpus]\nsource = " << corpus_source << "\n";
  if (corpus_source == "synth") {
    os << "speakers = " << speakers << "\ntrain_utterances_per_speaker = " << train_per_speaker
       << "\ntest_utterances_per_speaker = " << test_per_speaker
       << "\ntokens_per_utterance = " << tokens_per_utterance
       << "\nvocabulary_size = " << vocabulary_size << "\n";
  } else {
    os << "train_manifest = " << train_manifest << "\ntest_manifest = " << test_manifest << "\n";
  }
  os << "\n[noise]\nsource = " << noise_source << "\ntrain = " << JoinList(train_noise)
     << "\ntest = " << JoinList(test_noise) << "\nseconds = " << Exact(noise_seconds) << "\n\n";
  os << "[asr]\nencoder = " << (arch.kind == EncoderKind::kConvFront ? "conv" : "recurrent")
     << "\nhidden = " << arch.hidden << "\nconv_channels = " << JoinList(ch)
     << "\nmodels = " << JoinList(models) << "\n\n";
  os << "[train]\nepochs = " << train.epochs << "\nbatch_size = " << train.batch_size
     << "\nlr = " << Exact(train.lr) << "\nclip_norm = " << Exact(train.clip_norm)
     << "\nsnr_min_db = " << Exact(train.snr_min_db) << "\nsnr_max_db = " << Exact(train.snr_max_db)
     << "\naugment_prob = " << Exact(train.augment_prob) << "\n\n";
  os << "[probe]\nlayers = " << JoinList(ProbeLayers()) << "\nd_proj = " << probe.d_proj
     << "\nepochs = " << probe.epochs << "\nbatch_frames = " << probe.batch_frames
     << "\nlr = " << Exact(probe.lr) << "\nlr_decay = " << Exact(probe.lr_decay) << "\n\n";
  os << "[eval]\nconditions = " << JoinList(conds) << "\npairs_per_class = " << pairs_per_class
     << "\ngriffin_lim_iters = " << griffin_lim_iters << "\n";
  return os.str();
}

std::vector<std::string> RunConfig::ProbeLayers() const {
  const std::vector<std::string> all = arch.LayerTags();
  if (layers.empty()) return all;
  std::vector<std::string> out;
  if (std::find(layers.begin(), layers.end(), kFeaturesTag) != layers.end())
    out.push_back(kFeaturesTag);
  for (const std::string &t : all)
    if (std::find(layers.begin(), layers.end(), t) != layers.end()) out.push_back(t);
  return out;
}

double RunReport::Value(const std::string &model, const std::string &layer,
                        const std::string &metric, const std::string &condition) const {
  const auto it = rows.find(model);
  if (it != rows.end())
    for (const ReportRow &r : it->second)
      if (r.layer == layer && r.metric == metric && r.condition == condition) return r.value;
  Fail(ErrorKind::kIncompleteRun, "report has no " + metric + " for " + model + "/" + layer +
                                      " (" + condition + ")");
}

const TrendStat &RunReport::Trend(const std::string &model, const std::string &condition,
                                  const std::string &metric) const {
  for (const TrendStat &t : trends)
    if (t.model == model && t.condition == condition && t.metric == metric) return t;
  Fail(ErrorKind::kIncompleteRun, "report has no " + metric + " trend for " + model + " (" +
                                      condition + ")");
}

RunLock::RunLock(const std::string &dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const std::string p = path_;
    path_.clear();
    Fail(ErrorKind::kIo, "run directory is in use (" + p +
                             " exists; remove it if no other laud process is running)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  if (!path_.empty()) ::unlink(path_.c_str());
}

Run::Run(RunConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.output_dir.empty()) Fail(ErrorKind::kConfig, "output directory not set");
}

std::string Run::Path(const std::string &relative) const {
  return (fs::path(cfg_.output_dir) / relative).string();
}

void Run::Require(const std::string &relative, const std::string &producer) const {
  if (!fs::exists(Path(relative)))
    Fail(ErrorKind::kMissingArtifact,
         Path(relative) + " not found; run `laud " + producer + "` first");
}

void Run::Snapshot() const { WriteFileAtomic(Path("config.ini"), cfg_.ToIni()); }

std::string Run::HiddenPath(const std::string &model, const std::string &split,
                            const std::string &cond, const std::string &layer,
                            const std::string &utt) const {
  return "hidden/" + model + "/" + split + "/" + cond + "/" + layer + "/" + utt + ".hrep";
}

std::string Run::ReconPath(const std::string &model, const std::string &cond,
                           const std::string &layer, const std::string &utt,
                           const std::string &ext) const {
  return "recon/" + model + "/" + cond + "/" + layer + "/" + utt + ext;
}

std::string Run::EvalDir(const std::string &model, const std::string &cond,
                         const std::string &layer) const {
  return "eval/" + model + "/" + cond + (layer.empty() ? "" : "/" + layer);
}

Run::Corpus Run::LoadCorpus() const {
  Require("corpus/tokens.txt", "synth-corpus");
  Require("corpus/train.tsv", "synth-corpus");
  Require("corpus/test.tsv", "synth-corpus");
  Corpus c;
  std::stringstream ss(ReadText(Path("corpus/tokens.txt")));
  std::string tok;
  while (std::getline(ss, tok))
    if (!Trim(tok).empty()) c.tokens.push_back(Trim(tok));
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < c.tokens.size(); ++i) ids[c.tokens[i]] = static_cast<int>(i) + 1;
  for (const std::string split : {"train", "test"}) {
    auto &out = split == "train" ? c.train : c.test;
    for (const ManifestEntry &e : ReadManifest(Path("corpus/" + split + ".tsv"))) {
      Utterance u;
      u.id = Stem(e.path);
      u.speaker_id = e.speaker_id;
      u.wave = ReadWav(Path("corpus/" + e.path));
      for (const std::string &t : SplitList(e.transcript, ' ')) {
        const auto it = ids.find(t);
        if (it == ids.end()) Fail(ErrorKind::kFormat, "token '" + t + "' not in corpus/tokens.txt");
        u.transcript.push_back(it->second);
      }
      out.push_back(std::move(u));
    }
  }
  return c;
}

std::vector<Utterance> Run::TestSet(const Corpus &corpus, const Condition &cond) const {
  if (cond.clean) return corpus.test;
  std::vector<Utterance> out = corpus.test;
  for (Utterance &u : out) {
    const std::string rel = "noisy/" + cond.label + "/" + u.id + ".wav";
    Require(rel, "mix-noise");
    u.wave = ReadWav(Path(rel));
  }
  return out;
}

EncoderArch Run::Arch(const Corpus &corpus) const {
  EncoderArch arch = cfg_.arch;
  arch.tokens = corpus.tokens;
  return arch;
}

void Run::SynthCorpus() {
  std::vector<Utterance> train, test;
  std::vector<std::string> tokens;
  if (cfg_.corpus_source == "synth") {
    CorpusSpec spec;
    spec.num_speakers = cfg_.speakers;
    spec.tokens_per_utterance = cfg_.tokens_per_utterance;
    spec.vocabulary_size = cfg_.vocabulary_size;
    spec.seed = SubSeed(cfg_.seed, "corpus");
    spec.utterances_per_speaker = cfg_.train_per_speaker;
    spec.id_prefix = "train";
    train = laud::SynthCorpus(spec);
    spec.utterances_per_speaker = cfg_.test_per_speaker;
    spec.id_prefix = "test";
    test = laud::SynthCorpus(spec);
    tokens = SynthTokenNames(cfg_.vocabulary_size);
  } else {
    std::set<std::string> inventory, seen;
    std::vector<std::string> transcripts;
    auto ingest = [&](const std::string &manifest, std::vector<Utterance> *out) {
      const fs::path dir = fs::path(manifest).parent_path();
      for (const ManifestEntry &e : ReadManifest(manifest)) {
        Utterance u;
        u.id = Stem(e.path);
        if (!seen.insert(u.id).second)
          Fail(ErrorKind::kConfig, "duplicate utterance id " + u.id + " in " + manifest);
        u.speaker_id = e.speaker_id;
        u.wave = ReadCanonical(Resolve(dir.string(), e.path));
        for (const std::string &t : SplitList(e.transcript, ' ')) inventory.insert(t);
        transcripts.push_back(e.transcript);
        out->push_back(std::move(u));
      }
    };
    ingest(cfg_.train_manifest, &train);
    ingest(cfg_.test_manifest, &test);
    // Token ids follow the sorted inventory of both splits.
    tokens.assign(inventory.begin(), inventory.end());
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < tokens.size(); ++i) ids[tokens[i]] = static_cast<int>(i) + 1;
    std::size_t k = 0;
    for (auto *set : {&train, &test})
      for (Utterance &u : *set)
        for (const std::string &t : SplitList(transcripts[k++], ' ')) u.transcript.push_back(ids[t]);
  }
  if (tokens.empty()) Fail(ErrorKind::kConfig, "corpus has an empty token inventory");

  for (const std::string split : {"train", "test"}) {
    const auto &set = split == "train" ? train : test;
    std::vector<ManifestEntry> entries;
    for (const Utterance &u : set) {
      const std::string rel = split + "/" + u.id + ".wav";
      WriteWav(u.wave, Path("corpus/" + rel));
      std::vector<std::string> names;
      for (int t : u.transcript) names.push_back(tokens[static_cast<std::size_t>(t - 1)]);
      entries.push_back({rel, JoinList(names, " "), u.speaker_id});
    }
    WriteManifest(entries, Path("corpus/" + split + ".tsv"));
  }
  WriteFileAtomic(Path("corpus/tokens.txt"), JoinList(tokens, "\n") + "\n");
  spdlog::info("corpus: {} train, {} test utterances, {} tokens", train.size(), test.size(),
               tokens.size());
}

void Run::MixNoise() {
  const Corpus corpus = LoadCorpus();
  for (const std::string split : {"train", "test"}) {
    const auto &names = split == "train" ? cfg_.train_noise : cfg_.test_noise;
    for (const std::string &n : names) {
      Waveform w;
      std::string name = n;
      if (cfg_.noise_source == "synth") {
        w = SynthNoise(*ParseNoiseKind(n), cfg_.noise_seconds,
                       SubSeed(cfg_.seed, "noise/" + split + "/" + n));
      } else {
        w = ReadCanonical(n);
        name = Stem(n);
      }
      WriteWav(w, Path("noise/" + split + "/" + name + ".wav"));
    }
  }
  std::vector<Waveform> noises;
  for (const std::string &n : cfg_.test_noise)
    noises.push_back(ReadWav(Path("noise/test/" + (cfg_.noise_source == "synth" ? n : Stem(n)) + ".wav")));
  if (noises.empty()) return;
  for (const Utterance &u : corpus.test) {
    // One noise and one crop per utterance, shared by every condition.
    Rng rng = MakeRng(cfg_.seed, "crop/" + u.id);
    const Waveform &noise = noises[static_cast<std::size_t>(UniformIndex(rng, noises.size()))];
    for (const Condition &c : cfg_.conditions) {
      if (c.clean) continue;
      Rng r = rng;
      WriteWav(MixAtSnr(u.wave, noise, c.snr_db, r).mixed,
               Path("noisy/" + c.label + "/" + u.id + ".wav"));
    }
  }
  spdlog::info("noise: mixed {} test utterances", corpus.test.size());
}

void Run::TrainAsr() {
  const Corpus corpus = LoadCorpus();
  const EncoderArch arch = Arch(corpus);
  for (const std::string &model : cfg_.models) {
    const bool robust = model == "robust";
    std::vector<Waveform> noises;
    if (robust) {
      for (const std::string &n : cfg_.train_noise) {
        const std::string rel =
            "noise/train/" + (cfg_.noise_source == "synth" ? n : Stem(n)) + ".wav";
        Require(rel, "mix-noise");
        noises.push_back(ReadWav(Path(rel)));
      }
    }
    // Both models share the initialization and the batch order; they differ
    // only in augmentation.
    AsrModel m(arch);
    Rng init = MakeRng(cfg_.seed, "init/asr");
    m.Init(init);
    AsrTrainConfig tc = cfg_.train;
    tc.seed = SubSeed(cfg_.seed, "train/asr");
    tc.augment = robust;
    spdlog::info("train-asr: {} ({} epochs)", model, tc.epochs);
    const AsrTrainResult res = laud::TrainAsr(&m, corpus.train, tc, noises);
    m.Save(Path("models/" + model + "/asr.ckpt"));
    std::string log = "epoch\tloss\n";
    for (std::size_t e = 0; e < res.loss_history.size(); ++e)
      log += std::to_string(e + 1) + "\t" + Num(res.loss_history[e]) + "\n";
    log += "# skipped utterances: " + std::to_string(res.skipped) + "\n";
    WriteFileAtomic(Path("models/" + model + "/loss.tsv"), log);
  }
}

void Run::ExtractHidden() {
  const Corpus corpus = LoadCorpus();
  const std::vector<std::string> tags = cfg_.ProbeLayers();
  for (const std::string &model : cfg_.models) {
    Require("models/" + model + "/asr.ckpt", "train-asr");
    const AsrModel m = AsrModel::Load(Path("models/" + model + "/asr.ckpt"));
    std::string manifest = "utterance_id\tlayer_tag\tpath\n";
    auto extract = [&](const std::vector<Utterance> &set, const std::string &split,
                       const std::string &cond) {
      for (const Utterance &u : set) {
        for (const HiddenReps &h : laud::ExtractHidden(m, u, tags)) {
          const std::string rel = HiddenPath(model, split, cond, h.layer_tag, u.id);
          WriteHrep(h, Path(rel));
          manifest += u.id + "\t" + h.layer_tag + "\t" + rel + "\n";
        }
      }
    };
    extract(corpus.train, "train", "clean");
    for (const Condition &c : cfg_.conditions) extract(TestSet(corpus, c), "test", c.label);
    WriteFileAtomic(Path("hidden/" + model + "/manifest.tsv"), manifest);
    spdlog::info("extract-hidden: {} ({} layers)", model, tags.size());
  }
}

void Run::TrainProbe() {
  const Corpus corpus = LoadCorpus();
  std::map<std::string, Matrix> targets;
  for (const Utterance &u : corpus.train) targets[u.id] = StaticLogMel(u.wave);
  for (const std::string &model : cfg_.models) {
    for (const std::string &layer : cfg_.ProbeLayers()) {
      std::vector<HiddenReps> hidden;
      for (const Utterance &u : corpus.train) {
        const std::string rel = HiddenPath(model, "train", "clean", layer, u.id);
        Require(rel, "extract-hidden");
        hidden.push_back(ReadHrep(Path(rel)));
      }
      ProbeDecoder d(layer, static_cast<int>(hidden[0].frames.cols()), hidden[0].factor,
                     cfg_.probe.d_proj);
      Rng init = MakeRng(cfg_.seed, "init/probe/" + model + "/" + layer);
      d.Init(init);
      ProbeConfig pc = cfg_.probe;
      pc.seed = SubSeed(cfg_.seed, "probe/" + model + "/" + layer);
      const ProbeTrainResult res = laud::TrainProbe(&d, hidden, targets, pc);
      d.Save(Path("probes/" + model + "/" + layer + ".ckpt"));
      std::string log = "epoch\tl1\n";
      for (std::size_t e = 0; e < res.loss_history.size(); ++e)
        log += std::to_string(e + 1) + "\t" + Num(res.loss_history[e]) + "\n";
      WriteFileAtomic(Path("probes/" + model + "/" + layer + ".loss.tsv"), log);
      spdlog::info("train-probe: {}/{} final L1 {:.4f}", model, layer, res.loss_history.back());
    }
  }
}

void Run::Reconstruct() {
  const Corpus corpus = LoadCorpus();
  GriffinLimConfig gl;
  gl.iterations = cfg_.griffin_lim_iters;
  for (const std::string &model : cfg_.models) {
    for (const std::string &layer : cfg_.ProbeLayers()) {
      const std::string ckpt = "probes/" + model + "/" + layer + ".ckpt";
      Require(ckpt, "train-probe");
      const ProbeDecoder d = ProbeDecoder::Load(Path(ckpt));
      for (const Condition &c : cfg_.conditions) {
        for (const Utterance &u : corpus.test) {
          const std::string rel = HiddenPath(model, "test", c.label, layer, u.id);
          Require(rel, "extract-hidden");
          const HiddenReps h = ReadHrep(Path(rel));
          HiddenReps mel{layer, u.id, u.speaker_id, 1, d.Reconstruct(h)};
          WriteHrep(mel, Path(ReconPath(model, c.label, layer, u.id, ".hrep")));
          WriteWav(Audify(mel.frames, gl), Path(ReconPath(model, c.label, layer, u.id, ".wav")));
        }
      }
      spdlog::info("reconstruct: {}/{}", model, layer);
    }
  }
}

void Run::EvalStoi() {
  const Corpus corpus = LoadCorpus();
  auto score = [&](const std::vector<Utterance> &degraded, const std::string &dir) {
    std::string csv = "utterance_id,stoi\n";
    for (std::size_t i = 0; i < corpus.test.size(); ++i) {
      const Waveform &clean = corpus.test[i].wave;
      const std::size_t n = std::min(clean.size(), degraded[i].wave.size());
      csv += corpus.test[i].id + "," + Exact(Stoi(TrimTo(clean, n), TrimTo(degraded[i].wave, n))) + "\n";
    }
    WriteFileAtomic(Path(dir + "/stoi.csv"), csv);
  };
  for (const Condition &c : cfg_.conditions) score(TestSet(corpus, c), EvalDir(kReferenceDir, c.label, ""));
  for (const std::string &model : cfg_.models)
    for (const Condition &c : cfg_.conditions)
      for (const std::string &layer : cfg_.ProbeLayers()) {
        std::vector<Utterance> rec = corpus.test;
        for (Utterance &u : rec) {
          const std::string rel = ReconPath(model, c.label, layer, u.id, ".wav");
          Require(rel, "reconstruct");
          u.wave = ReadWav(Path(rel));
        }
        score(rec, EvalDir(model, c.label, layer));
      }
  spdlog::info("eval-stoi: done");
}

void Run::EvalEer() {
  const Corpus corpus = LoadCorpus();
  std::vector<UtteranceInfo> info;
  for (const Utterance &u : corpus.test) info.push_back({u.id, u.speaker_id});
  // One pair list for every model, layer and condition.
  const std::vector<ScoredPair> pairs =
      SamplePairs(info, cfg_.pairs_per_class, SubSeed(cfg_.seed, "sampling/pairs"));
  auto score = [&](const std::vector<Utterance> &set, const std::string &dir) {
    std::vector<Vector> emb;
    for (const Utterance &u : set) emb.push_back(EmbedSpeaker(StaticLogMel(u.wave)));
    CenterEmbeddings(&emb);
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < set.size(); ++i) index[set[i].id] = i;
    std::vector<ScoredPair> scored = pairs;
    for (ScoredPair &p : scored) p.score = CosineSimilarity(emb[index[p.utt_a]], emb[index[p.utt_b]]);
    WriteScores(scored, Path(dir + "/scores.csv"));
  };
  for (const std::string &model : cfg_.models)
    for (const Condition &c : cfg_.conditions)
      for (const std::string &layer : cfg_.ProbeLayers()) {
        std::vector<Utterance> rec = corpus.test;
        for (Utterance &u : rec) {
          const std::string rel = ReconPath(model, c.label, layer, u.id, ".wav");
          Require(rel, "reconstruct");
          u.wave = ReadWav(Path(rel));
        }
        score(rec, EvalDir(model, c.label, layer));
      }
  for (const Condition &c : cfg_.conditions) score(TestSet(corpus, c), EvalDir(kReferenceDir, c.label, ""));
  spdlog::info("eval-eer: done");
}

RunReport Run::Report() {
  const Corpus corpus = LoadCorpus();
  const EncoderArch arch = Arch(corpus);
  const std::vector<std::string> layers = cfg_.ProbeLayers();

  std::vector<std::string> missing;
  for (const std::string &model : cfg_.models)
    for (const std::string &layer : layers) {
      bool ok = true;
      for (const Condition &c : cfg_.conditions) {
        const std::string dir = EvalDir(model, c.label, layer);
        ok = ok && fs::exists(Path(dir + "/stoi.csv")) && fs::exists(Path(dir + "/scores.csv"));
        for (const Utterance &u : corpus.test)
          ok = ok && fs::exists(Path(ReconPath(model, c.label, layer, u.id, ".hrep")));
      }
      if (!ok) missing.push_back(model + "/" + layer);
    }
  for (const Condition &c : cfg_.conditions) {
    const std::string dir = EvalDir(kReferenceDir, c.label, "");
    if (!fs::exists(Path(dir + "/stoi.csv")) || !fs::exists(Path(dir + "/scores.csv")))
      missing.push_back(std::string(kReferenceDir) + "/" + c.label);
  }
  if (!missing.empty())
    Fail(ErrorKind::kIncompleteRun,
         "missing reconstructions or scores for: " + JoinList(missing) +
             " (run `laud reconstruct`, `laud eval-stoi` and `laud eval-eer`)");

  auto mean_stoi = [&](const std::string &dir) {
    std::vector<double> v;
    for (const auto &row : ReadCsv(Path(dir + "/stoi.csv"))) {
      if (row.size() != 2 || !ParseReal(row[1])) Fail(ErrorKind::kFormat, "bad row in " + dir + "/stoi.csv");
      v.push_back(*ParseReal(row[1]));
    }
    return Mean(v);
  };
  auto eer = [&](const std::string &dir) { return ComputeEer(ReadScores(Path(dir + "/scores.csv"))).eer; };

  std::map<std::string, Matrix> targets;
  for (const Utterance &u : corpus.test) targets[u.id] = StaticLogMel(u.wave);

  RunReport report;
  for (const std::string &model : cfg_.models) {
    std::vector<ReportRow> &rows = report.rows[model];
    for (const Condition &c : cfg_.conditions) {
      const std::string dir = EvalDir(kReferenceDir, c.label, "");
      rows.push_back({kInputLayer, "stoi", c.label, mean_stoi(dir)});
      rows.push_back({kInputLayer, "eer", c.label, eer(dir)});
    }
    for (const std::string &layer : layers)
      for (const Condition &c : cfg_.conditions) {
        std::vector<double> l1;
        for (const Utterance &u : corpus.test)
          l1.push_back(MeanL1(ReadHrep(Path(ReconPath(model, c.label, layer, u.id, ".hrep"))).frames,
                              targets[u.id]));
        const std::string dir = EvalDir(model, c.label, layer);
        rows.push_back({layer, "l1", c.label, Mean(l1)});
        rows.push_back({layer, "eer", c.label, eer(dir)});
        rows.push_back({layer, "stoi", c.label, mean_stoi(dir)});
      }
    const AsrModel m = AsrModel::Load(Path("models/" + model + "/asr.ckpt"));
    for (const Condition &c : cfg_.conditions)
      rows.push_back({kOutputLayer, "wer", c.label, EvalWer(m, TestSet(corpus, c)).aggregate()});

    // Depth trends over the encoder layers only.
    const std::vector<std::string> encoder = arch.LayerTags();
    for (const Condition &c : cfg_.conditions)
      for (const std::string metric : {"l1", "eer", "stoi"}) {
        std::vector<double> depth, value;
        for (const ReportRow &r : rows) {
          const auto pos = std::find(encoder.begin(), encoder.end(), r.layer);
          if (pos == encoder.end() || r.metric != metric || r.condition != c.label) continue;
          depth.push_back(static_cast<double>(pos - encoder.begin()));
          value.push_back(r.value);
        }
        if (depth.size() < 2) continue;
        report.trends.push_back({model, c.label, metric, SpearmanCorrelation(value, depth),
                                 static_cast<int>(depth.size())});
      }

    std::string csv = "layer,metric,condition,value\n";
    for (const ReportRow &r : rows)
      csv += r.layer + "," + r.metric + "," + r.condition + "," + Num(r.value) + "\n";
    WriteFileAtomic(Path("report/" + model + ".csv"), csv);
  }

  std::string trends = "model,condition,metric,spearman,layers\n";
  std::ostringstream summary;
  summary << "Spearman correlation of each metric with encoder depth\n";
  for (const TrendStat &t : report.trends) {
    trends += t.model + "," + t.condition + "," + t.metric + "," + Num(t.spearman) + "," +
              std::to_string(t.layers) + "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "  %-9s %-6s %-5s rho = %+.3f over %d layers\n",
                  t.model.c_str(), t.condition.c_str(), t.metric.c_str(), t.spearman, t.layers);
    summary << line;
  }
  summary << "\nPer-layer values\n";
  for (const std::string &model : cfg_.models) {
    summary << "  " << model << "\n";
    for (const ReportRow &r : report.rows[model]) {
      char line[160];
      std::snprintf(line, sizeof(line), "    %-9s %-5s %-6s %.4f\n", r.layer.c_str(),
                    r.metric.c_str(), r.condition.c_str(), r.value);
      summary << line;
    }
  }
  WriteFileAtomic(Path("report/trends.csv"), trends);
  WriteFileAtomic(Path("report/summary.txt"), summary.str());
  spdlog::info("report: {}", Path("report"));
  return report;
}

void Run::ExportSpectrogram() {
  const Corpus corpus = LoadCorpus();
  for (const Condition &c : cfg_.conditions)
    for (const Utterance &u : TestSet(corpus, c))
      ExportPgm(MelSpectrogram{StaticLogMel(u.wave), false},
                Path("export/" + std::string(kReferenceDir) + "/" + c.label + "/" + u.id + ".pgm"));
  for (const std::string &model : cfg_.models)
    for (const Condition &c : cfg_.conditions)
      for (const std::string &layer : cfg_.ProbeLayers())
        for (const Utterance &u : corpus.test) {
          const std::string rel = ReconPath(model, c.label, layer, u.id, ".hrep");
          Require(rel, "reconstruct");
          ExportPgm(MelSpectrogram{ReadHrep(Path(rel)).frames, false},
                    Path("export/" + model + "/" + c.label + "/" + layer + "/" + u.id + ".pgm"));
        }
}

const std::vector<std::string> &Run::StageNames() {
  static const std::vector<std::string> names = {
      "synth-corpus", "mix-noise", "train-asr", "extract-hidden", "train-probe",
      "reconstruct",  "eval-stoi", "eval-eer",  "report",         "export-spectrogram"};
  return names;
}

void Run::Stage(const std::string &name) {
  const std::map<std::string, std::function<void()>> stages = {
      {"synth-corpus", [this] { SynthCorpus(); }},
      {"mix-noise", [this] { MixNoise(); }},
      {"train-asr", [this] { TrainAsr(); }},
      {"extract-hidden", [this] { ExtractHidden(); }},
      {"train-probe", [this] { TrainProbe(); }},
      {"reconstruct", [this] { Reconstruct(); }},
      {"eval-stoi", [this] { EvalStoi(); }},
      {"eval-eer", [this] { EvalEer(); }},
      {"report", [this] { Report(); }},
      {"export-spectrogram", [this] { ExportSpectrogram(); }},
  };
  const auto it = stages.find(name);
  if (it == stages.end()) Fail(ErrorKind::kConfig, "unknown stage " + name);
  Snapshot();
  it->second();
  WriteArtifactManifest();
}

RunReport Run::RunAll() {
  Snapshot();
  SynthCorpus();
  MixNoise();
  TrainAsr();
  ExtractHidden();
  TrainProbe();
  Reconstruct();
  EvalStoi();
  EvalEer();
  RunReport report = Report();
  ExportSpectrogram();
  WriteArtifactManifest();
  return report;
}

namespace {

std::map<std::string, std::string> HashTree(const std::string &root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto &entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), root).generic_string();
    if (rel == "manifest.sha256" || rel == ".lock" || entry.path().extension() == ".partial")
      continue;
    out[rel] = Sha256File(entry.path().string());
  }
  return out;
}

}  // namespace

void Run::WriteArtifactManifest() const {
  std::string text;
  for (const auto &[rel, hash] : HashTree(cfg_.output_dir)) text += hash + "  " + rel + "\n";
  WriteFileAtomic(Path("manifest.sha256"), text);
}

std::vector<std::string> Run::VerifyArtifactManifest() const {
  Require("manifest.sha256", "run-all");
  std::map<std::string, std::string> recorded;
  std::stringstream ss(ReadText(Path("manifest.sha256")));
  std::string line;
  while (std::getline(ss, line)) {
    if (line.size() < 67) continue;
    recorded[line.substr(66)] = line.substr(0, 64);
  }
  const auto actual = HashTree(cfg_.output_dir);
  std::vector<std::string> diffs;
  for (const auto &[rel, hash] : recorded) {
    const auto it = actual.find(rel);
    if (it == actual.end()) diffs.push_back("missing " + rel);
    else if (it->second != hash) diffs.push_back("changed " + rel);
  }
  for (const auto &[rel, hash] : actual)
    if (!recorded.count(rel)) diffs.push_back("unrecorded " + rel);
  return diffs;
}

int ExitCode(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kMissingArtifact:
    case ErrorKind::kIncompleteRun: return 3;
    case ErrorKind::kNumeric: return 4;
    default: return 1;
  }
}

}  // namespace laud
