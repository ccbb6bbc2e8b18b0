// SPDX-License-Identifier: Apache-2.0

#include "tdsmrp/io.hpp"

#include <bit>
#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "json.hpp"

namespace tdsmrp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string format_double(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& text, const std::string& what) {
  const auto* begin = text.data();
  const auto* end = begin + text.size();
  while (begin < end && *begin == ' ') ++begin;
  while (end > begin && end[-1] == ' ') --end;
  double x = 0.0;
  const auto r = std::from_chars(begin, end, x);
  if (r.ec != std::errc() || r.ptr != end) throw InvalidInput(what + ": not a number: '" + text + "'");
  return x;
}

long long parse_integer(const std::string& text, const std::string& what) {
  const double x = parse_double(text, what);
  if (x != static_cast<double>(static_cast<long long>(x)))
    throw InvalidInput(what + ": not an integer: '" + text + "'");
  return static_cast<long long>(x);
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, what));
  return out;
}

std::string format_list(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + format_double(xs[i]);
  return s;
}

std::string format_list(const Eigen::VectorXd& xs) {
  return format_list(std::vector<double>(xs.data(), xs.data() + xs.size()));
}

Eigen::VectorXd to_vector(const std::vector<double>& xs) {
  return Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

bool parse_bool(const std::string& text, const std::string& what) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw InvalidInput(what + ": expected true or false, got '" + text + "'");
}

// Little-endian scalar I/O for checkpoints.
template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>, std::int64_t, T>>;
  U bits;
  if constexpr (std::is_floating_point_v<T>) bits = std::bit_cast<std::uint64_t>(static_cast<double>(value));
  else bits = static_cast<U>(value);
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>, std::int64_t, T>>;
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U)))
    throw InvalidInput("checkpoint is truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(bytes[i]) << (8 * i);
  if constexpr (std::is_floating_point_v<T>) return std::bit_cast<double>(static_cast<std::uint64_t>(bits));
  else return static_cast<T>(bits);
}

constexpr char kCheckpointMagic[8] = {'T', 'D', 'S', 'M', 'R', 'P', 'C', 'K'};

std::string_view fold_name(Fold f) {
  switch (f) {
    case Fold::train: return "train";
    case Fold::validation: return "validation";
    case Fold::test: return "test";
  }
  return "train";
}

Fold parse_fold(const std::string& s) {
  if (s == "train") return Fold::train;
  if (s == "validation") return Fold::validation;
  if (s == "test") return Fold::test;
  throw InvalidInput("unknown fold '" + s + "'");
}

json moments_json(const Moments& m) { return json::array({m.mean, m.std}); }

Moments moments_from(const json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidInput("stats: moments must be [mean, std]");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

json bound_json(double x) { return std::isinf(x) ? json(nullptr) : json(x); }

double bound_from(const json& j, double missing) {
  return j.is_null() ? missing : j.get<double>();
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

void write_dataset(std::ostream& out, const Dataset& dataset) {
  json header;
  header["format"] = "tdsmrp-dataset";
  header["version"] = kDatasetFormatVersion;
  json features = json::array();
  for (const auto& f : dataset.registry.features())
    features.push_back({{"name", f.name}, {"kind", std::string(to_string(f.kind))}});
  header["features"] = features;
  if (dataset.oracle)
    header["oracle"] = std::vector<double>(dataset.oracle->data(),
                                           dataset.oracle->data() + dataset.oracle->size());
  out << header.dump() << '\n';
  for (const auto& ep : dataset.episodes) {
    json j;
    j["patient_id"] = ep.patient_id;
    j["sex"] = std::string(to_string(ep.sex));
    j["age"] = ep.age;
    if (ep.weight) j["weight"] = *ep.weight;
    j["outcome"] = std::string(to_string(ep.outcome));
    j["end_time"] = ep.end_time;
    json events = json::array();
    for (const auto& e : ep.events) events.push_back(json::array({e.time, e.feature.value, e.value}));
    j["events"] = std::move(events);
    if (!ep.latent_path.empty()) {
      json path = json::array();
      for (const auto& s : ep.latent_path) path.push_back(json::array({s.enter_time, s.state}));
      j["latent_path"] = std::move(path);
    }
    out << j.dump() << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) -> InvalidInput {
    return InvalidInput("dataset line " + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line)) throw InvalidInput("dataset is empty (missing header)");
  ++line_no;
  try {
    const json header = json::parse(line);
    if (header.value("format", "") != "tdsmrp-dataset") throw fail("not a tdsmrp dataset header");
    if (header.value("version", 0) != kDatasetFormatVersion)
      throw fail("unsupported dataset version");
    std::vector<FeatureInfo> features;
    for (const auto& f : header.at("features"))
      features.push_back({f.at("name").get<std::string>(),
                          parse_feature_kind(f.at("kind").get<std::string>())});
    ds.registry = FeatureRegistry(std::move(features));
    if (header.contains("oracle")) ds.oracle = to_vector(header.at("oracle").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw fail(e.what());
  } catch (const InvalidInput& e) {
    throw fail(e.what());
  }
  const auto n_features = static_cast<std::int64_t>(ds.registry.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Episode ep;
      ep.patient_id = j.at("patient_id").get<std::int64_t>();
      const auto sex = j.at("sex").get<std::string>();
      if (sex != "F" && sex != "M") throw fail("sex must be F or M");
      ep.sex = sex == "F" ? Sex::female : Sex::male;
      ep.age = j.at("age").get<double>();
      if (j.contains("weight")) ep.weight = j.at("weight").get<double>();
      const auto outcome = j.at("outcome").get<std::string>();
      if (outcome != "death" && outcome != "discharge") throw fail("outcome must be death or discharge");
      ep.outcome = outcome == "death" ? Outcome::death : Outcome::discharge;
      ep.end_time = j.at("end_time").get<double>();
      for (const auto& e : j.at("events")) {
        if (!e.is_array() || e.size() != 3) throw fail("event must be [time, feature_id, value]");
        const auto f = e.at(1).get<std::int64_t>();
        if (f < 0 || f >= n_features) throw fail("feature id " + std::to_string(f) + " out of range");
        ep.events.push_back({e.at(0).get<double>(), FeatureId(static_cast<std::int32_t>(f)),
                             e.at(2).get<double>()});
      }
      if (j.contains("latent_path"))
        for (const auto& s : j.at("latent_path")) {
          if (!s.is_array() || s.size() != 2) throw fail("latent segment must be [time, state]");
          ep.latent_path.push_back({s.at(0).get<double>(), s.at(1).get<int>()});
        }
      validate(ep);
      ds.episodes.push_back(std::move(ep));
    } catch (const json::exception& e) {
      throw fail(e.what());
    } catch (const InvalidInput& e) {
      const std::string what = e.what();
      if (what.rfind("dataset line", 0) == 0) throw;
      throw fail(what);
    }
  }
  return ds;
}

void save_dataset(const fs::path& path, const Dataset& dataset) {
  auto out = open_out(path, std::ios::binary);
  write_dataset(out, dataset);
}

Dataset load_dataset(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  return read_dataset(in);
}

// ---------------------------------------------------------------------------
// Config files

const std::string* ConfigFile::Section::find(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return &v;
  return nullptr;
}

const ConfigFile::Section* ConfigFile::find(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

ConfigFile parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  ConfigFile file;
  for (const auto& [name, section] : tree) {
    if (section.empty()) throw InvalidInput("config: key '" + name + "' outside a section");
    ConfigFile::Section s{name, {}};
    for (const auto& [key, value] : section) s.entries.emplace_back(key, value.data());
    file.sections.push_back(std::move(s));
  }
  return file;
}

ConfigFile load_config(const fs::path& path) {
  auto in = open_in(path);
  return parse_config(in);
}

namespace {

class SectionReader {
 public:
  SectionReader(const ConfigFile::Section& s) : s_(s) {}  // NOLINT(google-explicit-constructor)

  const std::string& text(const std::string& key) const {
    const auto* v = s_.find(key);
    if (!v) throw InvalidInput("config [" + s_.name + "]: missing key '" + key + "'");
    return *v;
  }
  bool has(const std::string& key) const { return s_.find(key) != nullptr; }
  double number(const std::string& key) const { return parse_double(text(key), where(key)); }
  double number(const std::string& key, double fallback) const {
    return s_.find(key) ? number(key) : fallback;
  }
  std::vector<double> list(const std::string& key) const { return parse_list(text(key), where(key)); }
  void only(std::initializer_list<const char*> allowed) const {
    for (const auto& [k, v] : s_.entries) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || k == a;
      if (!ok) throw InvalidInput("config [" + s_.name + "]: unknown key '" + k + "'");
    }
  }
  std::string where(const std::string& key) const { return "config [" + s_.name + "] " + key; }

 private:
  const ConfigFile::Section& s_;
};

const ConfigFile::Section& require(const ConfigFile& file, const std::string& name) {
  const auto* s = file.find(name);
  if (!s) throw InvalidInput("config: missing section [" + name + "]");
  return *s;
}

constexpr std::string_view kFeaturePrefix = "feature ";

}  // namespace

CohortConfig cohort_from_config(const ConfigFile& file) {
  CohortConfig c;
  const SectionReader cohort(require(file, "cohort"));
  cohort.only({"n_latent", "max_duration", "initial_dist"});
  const long long n = parse_integer(cohort.text("n_latent"), cohort.where("n_latent"));
  if (n < 1 || n > 1000) throw InvalidInput("config [cohort]: n_latent must lie in [1, 1000]");
  c.n_latent = static_cast<int>(n);
  c.max_duration = cohort.number("max_duration", c.max_duration);
  c.initial_dist = to_vector(cohort.list("initial_dist"));

  const SectionReader rates(require(file, "rates"));
  const Eigen::Index size = c.n_latent + 2;
  c.rate_matrix = Eigen::MatrixXd::Zero(size, size);
  for (int i = 0; i < c.n_latent; ++i) {
    const auto row = rates.list("s" + std::to_string(i));
    if (static_cast<Eigen::Index>(row.size()) != size)
      throw InvalidInput("config [rates]: s" + std::to_string(i) + " needs n_latent+2 entries");
    double exit = 0.0;
    for (Eigen::Index j = 0; j < size; ++j) {
      if (j == i) continue;
      c.rate_matrix(i, j) = row[static_cast<std::size_t>(j)];
      exit += c.rate_matrix(i, j);
    }
    c.rate_matrix(i, i) = -exit;
  }
  if (static_cast<int>(require(file, "rates").entries.size()) != c.n_latent)
    throw InvalidInput("config [rates]: expected exactly one row per transient state");

  if (const auto* d = file.find("demographics")) {
    const SectionReader r(*d);
    r.only({"age_mean", "age_std", "age_min", "age_max", "female_prob", "weight_mean_female",
            "weight_mean_male", "weight_std", "weight_missing_prob"});
    auto& g = c.demographics;
    g.age_mean = r.number("age_mean", g.age_mean);
    g.age_std = r.number("age_std", g.age_std);
    g.age_min = r.number("age_min", g.age_min);
    g.age_max = r.number("age_max", g.age_max);
    g.female_prob = r.number("female_prob", g.female_prob);
    g.weight_mean_female = r.number("weight_mean_female", g.weight_mean_female);
    g.weight_mean_male = r.number("weight_mean_male", g.weight_mean_male);
    g.weight_std = r.number("weight_std", g.weight_std);
    g.weight_missing_prob = r.number("weight_missing_prob", g.weight_missing_prob);
  }

  std::vector<FeatureInfo> features;
  std::vector<EmissionSpec> emissions;
  for (const auto& s : file.sections) {
    if (s.name.rfind(kFeaturePrefix, 0) != 0) {
      if (s.name != "cohort" && s.name != "rates" && s.name != "demographics")
        throw InvalidInput("config: unknown section [" + s.name + "]");
      continue;
    }
    const SectionReader r(s);
    r.only({"kind", "rate", "mean", "std"});
    const std::string name = s.name.substr(kFeaturePrefix.size());
    const FeatureKind kind = parse_feature_kind(r.text("kind"));
    if (kind == FeatureKind::demographic)
      throw InvalidInput("config: demographic features are implicit, remove [" + s.name + "]");
    features.push_back({name, kind});
    emissions.push_back({r.list("rate"), r.list("mean"), r.list("std")});
  }
  c.registry = FeatureRegistry::with_demographics(features);
  c.emissions.assign(c.registry.size() - features.size(), EmissionSpec{});
  c.emissions.insert(c.emissions.end(), emissions.begin(), emissions.end());
  validate(c);
  return c;
}

void write_cohort_config(std::ostream& out, const CohortConfig& c) {
  out << "[cohort]\n";
  out << "n_latent = " << c.n_latent << "\n";
  out << "max_duration = " << format_double(c.max_duration) << "\n";
  out << "initial_dist = " << format_list(c.initial_dist) << "\n\n";
  out << "[rates]\n";
  out << "; one row per transient state: rates to s0..s" << c.n_latent - 1
      << ", death, discharge (per hour); the diagonal is recomputed\n";
  for (int i = 0; i < c.n_latent; ++i) {
    Eigen::VectorXd row = c.rate_matrix.row(i).transpose();
    row[i] = 0.0;
    out << "s" << i << " = " << format_list(row) << "\n";
  }
  const auto& g = c.demographics;
  out << "\n[demographics]\n";
  out << "age_mean = " << format_double(g.age_mean) << "\n";
  out << "age_std = " << format_double(g.age_std) << "\n";
  out << "age_min = " << format_double(g.age_min) << "\n";
  out << "age_max = " << format_double(g.age_max) << "\n";
  out << "female_prob = " << format_double(g.female_prob) << "\n";
  out << "weight_mean_female = " << format_double(g.weight_mean_female) << "\n";
  out << "weight_mean_male = " << format_double(g.weight_mean_male) << "\n";
  out << "weight_std = " << format_double(g.weight_std) << "\n";
  out << "weight_missing_prob = " << format_double(g.weight_missing_prob) << "\n";
  for (std::size_t f = 0; f < c.registry.size(); ++f) {
    const FeatureId id(static_cast<std::int32_t>(f));
    if (c.registry.is_demographic(id)) continue;
    const auto& e = c.emissions[f];
    out << "\n[feature " << c.registry[id].name << "]\n";
    out << "kind = " << to_string(c.registry.kind(id)) << "\n";
    out << "rate = " << format_list(e.rate) << "\n";
    out << "mean = " << format_list(e.mean) << "\n";
    out << "std = " << format_list(e.std) << "\n";
  }
}

ShiftSpec shift_from_config(const ConfigFile& file, const FeatureRegistry& registry) {
  ShiftSpec s;
  for (const auto& section : file.sections)
    if (section.name != "shift" && section.name != "mean_shift")
      throw InvalidInput("shift config: unknown section [" + section.name + "]");
  if (const auto* sec = file.find("shift")) {
    const SectionReader r(*sec);
    r.only({"rate_scale", "death_scale", "discharge_scale", "initial_dist"});
    s.rate_scale = r.number("rate_scale", 1.0);
    s.death_scale = r.number("death_scale", 1.0);
    s.discharge_scale = r.number("discharge_scale", 1.0);
    if (sec->find("initial_dist")) s.initial_dist_override = to_vector(r.list("initial_dist"));
  }
  if (const auto* sec = file.find("mean_shift")) {
    s.emission_mean_shift.assign(registry.size(), 0.0);
    for (const auto& [name, value] : sec->entries) {
      const auto id = registry.find(name);
      if (!id) throw InvalidInput("shift config: unknown feature '" + name + "'");
      s.emission_mean_shift[id->index()] = parse_double(value, "shift config mean_shift " + name);
    }
  }
  return s;
}

void write_shift_config(std::ostream& out, const ShiftSpec& s, const FeatureRegistry& registry) {
  out << "[shift]\n";
  out << "rate_scale = " << format_double(s.rate_scale) << "\n";
  out << "death_scale = " << format_double(s.death_scale) << "\n";
  out << "discharge_scale = " << format_double(s.discharge_scale) << "\n";
  if (s.initial_dist_override) out << "initial_dist = " << format_list(*s.initial_dist_override) << "\n";
  if (s.emission_mean_shift.empty()) return;
  out << "\n[mean_shift]\n";
  for (std::size_t f = 0; f < s.emission_mean_shift.size(); ++f)
    if (s.emission_mean_shift[f] != 0.0)
      out << registry[FeatureId(static_cast<std::int32_t>(f))].name << " = "
          << format_double(s.emission_mean_shift[f]) << "\n";
}

ExperimentConfig experiment_from_config(const ConfigFile& file) {
  ExperimentConfig e;
  for (const auto& s : file.sections)
    if (s.name != "model" && s.name != "training" && s.name != "samples")
      throw InvalidInput("experiment config: unknown section [" + s.name + "]");
  auto count = [](const SectionReader& r, const std::string& key, long long fallback) {
    if (!r.has(key)) return fallback;
    const long long v = parse_integer(r.text(key), r.where(key));
    if (v < 0) throw InvalidInput(r.where(key) + " must be nonnegative");
    return v;
  };
  if (const auto* s = file.find("model")) {
    const SectionReader r(*s);
    r.only({"embed_dim", "conv", "recurrent_hidden", "decoder_hidden"});
    auto& m = e.train.model;
    m.embed_dim = static_cast<int>(count(r, "embed_dim", m.embed_dim));
    m.recurrent_hidden = static_cast<int>(count(r, "recurrent_hidden", m.recurrent_hidden));
    m.decoder_hidden = static_cast<int>(count(r, "decoder_hidden", m.decoder_hidden));
    if (s->find("conv")) {
      m.conv.clear();
      std::stringstream ss(r.text("conv"));
      std::string stage;
      while (std::getline(ss, stage, ',')) {
        std::stringstream parts(stage);
        std::string k, st, ch;
        if (!std::getline(parts, k, ':') || !std::getline(parts, st, ':') || !std::getline(parts, ch))
          throw InvalidInput("config [model] conv: stages are kernel:stride:channels");
        m.conv.push_back({static_cast<int>(parse_integer(k, "conv kernel")),
                          static_cast<int>(parse_integer(st, "conv stride")),
                          static_cast<int>(parse_integer(ch, "conv channels"))});
      }
    }
  }
  if (const auto* s = file.find("training")) {
    const SectionReader r(*s);
    r.only({"batch_size", "max_epochs", "alpha", "learning_rate", "weight_decay", "precision",
            "balanced", "delay_x"});
    auto& t = e.train;
    t.batch_size = static_cast<std::size_t>(count(r, "batch_size", static_cast<long long>(t.batch_size)));
    t.max_epochs = static_cast<int>(count(r, "max_epochs", t.max_epochs));
    t.alpha = r.number("alpha", t.alpha);
    t.delay_x = r.number("delay_x", t.delay_x);
    if (s->find("learning_rate")) t.learning_rate = r.number("learning_rate");
    if (s->find("weight_decay")) t.weight_decay = r.number("weight_decay");
    if (s->find("balanced")) t.balanced = parse_bool(r.text("balanced"), r.where("balanced"));
    if (const auto* p = s->find("precision")) {
      if (*p == "single") t.precision = Precision::single;
      else if (*p == "double") t.precision = Precision::double_;
      else throw InvalidInput("config [training] precision: expected single or double");
    }
  }
  if (const auto* s = file.find("samples")) {
    const SectionReader r(*s);
    r.only({"train_anchors", "eval_anchors"});
    if (r.has("train_anchors")) e.train_sampling = parse_anchor_sampling(r.text("train_anchors"), 0);
    if (r.has("eval_anchors")) e.eval_sampling = parse_anchor_sampling(r.text("eval_anchors"), 0);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Stats and folds

void write_stats(std::ostream& out, const StandardizationStats& s) {
  json j;
  j["format"] = "tdsmrp-stats";
  j["version"] = 1;
  json value = json::array(), delta = json::array(), bounds = json::array();
  for (const auto& m : s.value) value.push_back(moments_json(m));
  for (const auto& m : s.delta_value) delta.push_back(moments_json(m));
  for (const auto& b : s.bounds) bounds.push_back(json::array({bound_json(b.low), bound_json(b.high)}));
  j["value"] = value;
  j["delta_value"] = delta;
  j["time_offset"] = moments_json(s.time_offset);
  j["delta_time"] = moments_json(s.delta_time);
  j["bounds"] = bounds;
  j["female_weight"] = s.female_weight;
  j["male_weight"] = s.male_weight;
  out << j.dump(1) << '\n';
}

StandardizationStats read_stats(std::istream& in) {
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "tdsmrp-stats") throw InvalidInput("not a tdsmrp stats file");
    StandardizationStats s;
    for (const auto& m : j.at("value")) s.value.push_back(moments_from(m));
    for (const auto& m : j.at("delta_value")) s.delta_value.push_back(moments_from(m));
    for (const auto& b : j.at("bounds"))
      s.bounds.push_back({bound_from(b.at(0), -std::numeric_limits<double>::infinity()),
                          bound_from(b.at(1), std::numeric_limits<double>::infinity())});
    s.time_offset = moments_from(j.at("time_offset"));
    s.delta_time = moments_from(j.at("delta_time"));
    s.female_weight = j.at("female_weight").get<double>();
    s.male_weight = j.at("male_weight").get<double>();
    if (s.delta_value.size() != s.value.size() || s.bounds.size() != s.value.size())
      throw InvalidInput("stats: per-feature arrays differ in length");
    return s;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("stats: ") + e.what());
  }
}

void save_stats(const fs::path& path, const StandardizationStats& stats) {
  auto out = open_out(path);
  write_stats(out, stats);
}

StandardizationStats load_stats(const fs::path& path) {
  auto in = open_in(path);
  return read_stats(in);
}

Split FoldIndex::split_for(const std::vector<Episode>& episodes) const {
  Split split;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const auto id = episodes[i].patient_id;
    const auto it = std::lower_bound(patients.begin(), patients.end(), id,
                                     [](const auto& p, std::int64_t v) { return p.first < v; });
    if (it == patients.end() || it->first != id)
      throw InvalidInput("fold index has no entry for patient " + std::to_string(id));
    (it->second == Fold::train ? split.train
                               : it->second == Fold::validation ? split.validation : split.test)
        .push_back(i);
  }
  return split;
}

FoldIndex make_fold_index(const std::vector<Episode>& episodes, const Split& split,
                          std::uint64_t seed, std::array<double, 3> fractions) {
  FoldIndex f;
  f.seed = seed;
  f.fractions = fractions;
  auto add = [&](const std::vector<std::size_t>& idx, Fold fold) {
    for (auto i : idx) f.patients.emplace_back(episodes[i].patient_id, fold);
  };
  add(split.train, Fold::train);
  add(split.validation, Fold::validation);
  add(split.test, Fold::test);
  std::sort(f.patients.begin(), f.patients.end());
  f.patients.erase(std::unique(f.patients.begin(), f.patients.end()), f.patients.end());
  return f;
}

void save_folds(const fs::path& path, const FoldIndex& folds) {
  json j;
  j["format"] = "tdsmrp-folds";
  j["version"] = 1;
  j["seed"] = folds.seed;
  j["fractions"] = folds.fractions;
  json patients = json::array();
  for (const auto& [id, fold] : folds.patients) patients.push_back(json::array({id, std::string(fold_name(fold))}));
  j["patients"] = patients;
  auto out = open_out(path);
  out << j.dump() << '\n';
}

FoldIndex load_folds(const fs::path& path) {
  auto in = open_in(path);
  try {
    const json j = json::parse(in);
    if (j.value("format", "") != "tdsmrp-folds") throw InvalidInput("not a tdsmrp fold index");
    FoldIndex f;
    f.seed = j.at("seed").get<std::uint64_t>();
    f.fractions = j.at("fractions").get<std::array<double, 3>>();
    for (const auto& p : j.at("patients"))
      f.patients.emplace_back(p.at(0).get<std::int64_t>(), parse_fold(p.at(1).get<std::string>()));
    if (!std::is_sorted(f.patients.begin(), f.patients.end()))
      throw InvalidInput("fold index is not sorted by patient id");
    return f;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("fold index: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void write_checkpoint(std::ostream& out, const ValueModel<double>& model) {
  const auto& c = model.config();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_le<std::uint32_t>(out, kCheckpointFormatVersion);
  put_le<std::int32_t>(out, c.embed_dim);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.conv.size()));
  for (const auto& s : c.conv) {
    put_le<std::int32_t>(out, s.kernel);
    put_le<std::int32_t>(out, s.stride);
    put_le<std::int32_t>(out, s.channels);
  }
  put_le<std::int32_t>(out, c.recurrent_hidden);
  put_le<std::int32_t>(out, c.decoder_hidden);
  put_le<std::int32_t>(out, c.feature_vocab);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(model.size()));
  for (Eigen::Index i = 0; i < model.size(); ++i) put_le<double>(out, model.parameters()[i]);
}

ValueModel<double> read_checkpoint(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + sizeof magic, kCheckpointMagic))
    throw InvalidInput("not a tdsmrp checkpoint");
  if (get_le<std::uint32_t>(in) != kCheckpointFormatVersion)
    throw InvalidInput("unsupported checkpoint version");
  ModelConfig c;
  c.embed_dim = get_le<std::int32_t>(in);
  const auto stages = get_le<std::uint32_t>(in);
  if (stages > 64) throw InvalidInput("checkpoint: implausible conv stage count");
  c.conv.resize(stages);
  for (auto& s : c.conv) {
    s.kernel = get_le<std::int32_t>(in);
    s.stride = get_le<std::int32_t>(in);
    s.channels = get_le<std::int32_t>(in);
  }
  c.recurrent_hidden = get_le<std::int32_t>(in);
  c.decoder_hidden = get_le<std::int32_t>(in);
  c.feature_vocab = get_le<std::int32_t>(in);
  ValueModel<double> model(c);
  if (get_le<std::uint64_t>(in) != static_cast<std::uint64_t>(model.size()))
    throw InvalidInput("checkpoint parameter count does not match its model config");
  for (Eigen::Index i = 0; i < model.size(); ++i) model.parameters()[i] = get_le<double>(in);
  if (in.peek() != std::char_traits<char>::eof()) throw InvalidInput("checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const fs::path& path, const ValueModel<double>& model) {
  auto out = open_out(path, std::ios::binary);
  write_checkpoint(out, model);
}

ValueModel<double> load_checkpoint(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  return read_checkpoint(in);
}

void write_training_log(std::ostream& out, const std::vector<EpochLog>& log) {
  for (const auto& e : log)
    out << json{{"seed", e.seed},
                {"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"val_metric", e.val_metric},
                {"wall_time", e.wall_time}}
               .dump()
        << '\n';
}

// ---------------------------------------------------------------------------
// Manifests

std::uint64_t file_hash(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

void save_manifest(const fs::path& path, const RunManifest& m) {
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto entries = [&](const std::vector<fs::path>& paths) {
    json arr = json::array();
    for (const auto& p : paths)
      arr.push_back({{"path", fs::proximate(p, base).generic_string()}, {"fnv1a", hex64(file_hash(p))}});
    return arr;
  };
  json j;
  j["format"] = "tdsmrp-manifest";
  j["tool_version"] = m.tool_version;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seeds"] = m.seeds;
  j["datasets"] = entries(m.datasets);
  j["checkpoints"] = entries(m.checkpoints);
  j["outputs"] = entries(m.outputs);
  std::string clock = m.wall_clock;
  if (clock.empty()) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    clock = buf;
  }
  j["wall_clock"] = clock;
  auto out = open_out(path);
  out << j.dump(1) << '\n';
}

std::vector<std::string> verify_manifest(const fs::path& path) {
  std::vector<std::string> problems;
  json j;
  try {
    auto in = open_in(path);
    j = json::parse(in);
  } catch (const std::exception& e) {
    return {std::string("manifest unreadable: ") + e.what()};
  }
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  for (const char* group : {"datasets", "checkpoints", "outputs"}) {
    if (!j.contains(group)) continue;
    for (const auto& e : j.at(group)) {
      const fs::path p = base / e.at("path").get<std::string>();
      if (!fs::exists(p)) {
        problems.push_back("missing " + p.string());
        continue;
      }
      if (hex64(file_hash(p)) != e.at("fnv1a").get<std::string>())
        problems.push_back("hash mismatch " + p.string());
    }
  }
  return problems;
}

}  // namespace tdsmrp
