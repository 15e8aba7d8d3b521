#include "peergrade/fit_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "peergrade/error.hpp"

namespace peergrade {

namespace {

constexpr const char* kManifestFile = "manifest.json";

std::string manifest_comment(const RunManifest& m) { return "# manifest: " + m.id + "\n"; }

double parse_number(std::string_view field, const std::filesystem::path& path) {
  if (field == "NA" || field == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::DataSchema, "non-numeric field '" + std::string(field) + "' in " + path.string());
  }
  return v;
}

// Splits on commas outside double quotes; quotes are stripped (names never contain them).
void split(std::string_view line, std::vector<std::string_view>& fields) {
  fields.clear();
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k < line.size() && line[k] == '"') {
      quoted = !quoted;
    } else if (k == line.size() || (line[k] == ',' && !quoted)) {
      std::string_view f = line.substr(start, k - start);
      if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
      fields.push_back(f);
      start = k + 1;
    }
  }
}

std::string csv_field(const std::string& text) {
  return text.find(',') == std::string::npos ? text : '"' + text + '"';
}

// Numeric CSV with a header; leading '#' lines are skipped.
struct NumericCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

NumericCsv read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  NumericCsv csv;
  std::string line;
  std::vector<std::string_view> fields;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    split(line, fields);
    if (!have_header) {
      for (auto f : fields) csv.header.emplace_back(f);
      have_header = true;
      continue;
    }
    if (fields.size() != csv.header.size()) {
      throw Error(ErrorCode::DataSchema, "ragged row in " + path.string());
    }
    std::vector<double> row(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) row[k] = parse_number(fields[k], path);
    csv.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(ErrorCode::DataSchema, "missing header in " + path.string());
  return csv;
}

void append_row(std::string& out, int chain, int iteration, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  out += std::to_string(chain);
  out += ',';
  out += std::to_string(iteration);
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    out += ',';
    out += format_double(row[k]);
  }
  out += '\n';
}

std::string draws_csv(const RunManifest& manifest, const DrawTable& table) {
  std::string out = manifest_comment(manifest);
  out += "chain,iteration";
  for (const auto& n : table.names) {
    out += ',';
    out += csv_field(n);
  }
  out += '\n';
  for (int c = 0; c < table.chains; ++c) {
    for (int s = 0; s < table.draws_per_chain; ++s) {
      append_row(out, c + 1, s + 1, table.values.row(static_cast<Eigen::Index>(c) * table.draws_per_chain + s));
    }
  }
  return out;
}

}  // namespace

std::string library_version() { return PEERGRADE_VERSION; }

std::string hex_digest(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

nlohmann::json RunManifest::to_json() const {
  return {{"id", id},
          {"version", version},
          {"status", status},
          {"command", command},
          {"variant", variant},
          {"data_hash", data_hash},
          {"config_hash", config_hash},
          {"seed", seed},
          {"model", model},
          {"sampler", sampler},
          {"scale", scale},
          {"chain_seconds", chain_seconds},
          {"files", files}};
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
  RunManifest m;
  try {
    m.id = j.at("id").get<std::string>();
    m.version = j.value("version", std::string());
    m.status = j.value("status", std::string());
    m.command = j.value("command", std::string());
    m.variant = j.at("variant").get<std::string>();
    m.data_hash = j.at("data_hash").get<std::string>();
    m.config_hash = j.value("config_hash", std::string());
    m.seed = j.value("seed", std::uint64_t{0});
    m.model = j.value("model", nlohmann::json::object());
    m.sampler = j.value("sampler", nlohmann::json::object());
    m.scale = j.value("scale", nlohmann::json::object());
    m.chain_seconds = j.value("chain_seconds", std::vector<double>{});
    m.files = j.value("files", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataSchema, std::string("bad manifest: ") + e.what());
  }
  return m;
}

RunManifest make_manifest(const std::string& command, const ModelSpec& spec,
                          const SamplerConfig& sampler, const PeerGradingDataset& data) {
  RunManifest m;
  m.version = library_version();
  m.command = command;
  m.variant = std::string(to_string(spec.variant));
  std::ostringstream hash;
  hash << std::hex;
  hash.width(16);
  hash.fill('0');
  hash << dataset_hash(data);
  m.data_hash = hash.str();
  m.model = model_spec_to_json(spec);
  m.sampler = sampler_config_to_json(sampler);
  m.scale = scale_to_json(data.scale());
  m.seed = sampler.seed;
  m.config_hash = hex_digest(m.model.dump() + m.sampler.dump());
  m.id = hex_digest(m.data_hash + m.config_hash + m.version);
  return m;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest) {
  write_text(dir / kManifestFile, manifest.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& dir) {
  try {
    return RunManifest::from_json(nlohmann::json::parse(read_text(dir / kManifestFile)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataSchema, std::string("bad manifest: ") + e.what());
  }
}

std::string summary_csv(const std::vector<ParameterSummary>& rows) {
  std::string out = "name,mean,sd,q2.5,q50,q97.5,rhat,ess_ratio\n";
  for (const auto& s : rows) {
    out += csv_field(s.name);
    for (double v : {s.mean, s.sd, s.q025, s.q50, s.q975, s.rhat, s.ess_ratio}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

nlohmann::json diagnostics_json(const FitResult& fit) {
  nlohmann::json j;
  j["flagged"] = fit.flagged();
  j["converged"] = fit.converged();
  double max_rhat = 0.0;
  double min_ess = std::numeric_limits<double>::infinity();
  for (const auto& s : fit.structural_summary) {
    max_rhat = std::max(max_rhat, s.rhat);
    min_ess = std::min(min_ess, s.ess_ratio);
  }
  j["max_rhat"] = max_rhat;
  j["min_ess_ratio"] = fit.structural_summary.empty() ? 0.0 : min_ess;
  j["thresholds"] = {{"rhat_below", 1.01}, {"ess_ratio_above", 0.10}};
  j["divergent"] = fit.run.divergent_count();
  j["divergent_fraction"] = fit.run.divergent_fraction();
  j["max_treedepth_fraction"] = fit.run.max_treedepth_fraction();
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& c : fit.run.chains) {
    double accept = 0.0;
    for (const auto& s : c.stats) accept += s.accept_stat;
    chains.push_back({{"step_size", c.step_size},
                      {"mean_accept_stat", c.stats.empty() ? 0.0 : accept / c.stats.size()},
                      {"warmup_divergences", c.warmup_divergences},
                      {"inv_metric_min", c.inv_metric.size() ? c.inv_metric.minCoeff() : 0.0},
                      {"inv_metric_max", c.inv_metric.size() ? c.inv_metric.maxCoeff() : 0.0}});
  }
  j["chains"] = chains;
  nlohmann::json structural = nlohmann::json::array();
  for (const auto& s : fit.structural_summary) structural.push_back(summary_to_json(s));
  j["structural"] = structural;
  if (fit.layout.spec.traits().has(LatentRole::Bias)) {
    VarianceShare share = variance_decomposition(fit.layout, fit.run);
    j["grader_variance_share"] = {{"mean", share.share.point},
                                  {"q2.5", share.share.lower},
                                  {"q97.5", share.share.upper}};
  }
  return j;
}

std::vector<std::string> write_fit_outputs(const std::filesystem::path& dir, const FitResult& fit,
                                           const PeerGradingDataset& data,
                                           const RunManifest& manifest) {
  std::filesystem::create_directories(dir);
  DrawTable all = fit.structural;
  DrawTable students = student_draws(fit.layout, fit.run);
  all.append(students);

  write_text(dir / "draws.csv", draws_csv(manifest, all));

  std::vector<ParameterSummary> rows = fit.structural_summary;
  std::vector<ParameterSummary> student_rows = summarize(students);
  rows.insert(rows.end(), student_rows.begin(), student_rows.end());
  write_text(dir / "summary.csv", manifest_comment(manifest) + summary_csv(rows));

  nlohmann::json diag = diagnostics_json(fit);
  diag["manifest"] = manifest.id;
  write_text(dir / "diagnostics.json", diag.dump(2) + "\n");

  std::string pll = manifest_comment(manifest);
  pll += "chain,iteration";
  for (int i = 0; i < data.size(); ++i) pll += ",obs" + std::to_string(i + 1);
  pll += '\n';
  for (int c = 0; c < fit.run.num_chains(); ++c) {
    const auto& m = fit.run.chains[c].pointwise_loglik;
    for (Eigen::Index s = 0; s < m.rows(); ++s) append_row(pll, c + 1, static_cast<int>(s + 1), m.row(s));
  }
  write_text(dir / "pointwise_loglik.csv", pll);

  std::string stats = manifest_comment(manifest);
  stats += "chain,iteration,step_size,tree_depth,n_leapfrog,divergent,accept_stat,energy,lp\n";
  for (int c = 0; c < fit.run.num_chains(); ++c) {
    const auto& chain = fit.run.chains[c];
    for (std::size_t s = 0; s < chain.stats.size(); ++s) {
      const auto& st = chain.stats[s];
      stats += std::to_string(c + 1) + ',' + std::to_string(s + 1) + ',' + format_double(chain.step_size) +
               ',' + std::to_string(st.tree_depth) + ',' + std::to_string(st.n_leapfrog) + ',' +
               (st.divergent ? "1" : "0") + ',' + format_double(st.accept_stat) + ',' +
               format_double(st.energy) + ',' + format_double(st.log_density) + '\n';
    }
  }
  write_text(dir / "sampler_stats.csv", stats);

  nlohmann::json layout = fit.layout.to_json();
  layout["manifest"] = manifest.id;
  layout["students"] = data.students();
  layout["assessments"] = data.assessments();
  std::vector<std::vector<int>> received(data.num_students(), std::vector<int>(data.num_assessments(), 0));
  for (const auto& e : data.edges()) ++received[e.examinee][e.assessment];
  layout["grades_received"] = received;
  write_text(dir / "layout.json", layout.dump(2) + "\n");
  return {"draws.csv", "summary.csv", "diagnostics.json", "pointwise_loglik.csv",
          "sampler_stats.csv", "layout.json"};
}

std::string scores_csv(const DrawTable& draws, const nlohmann::json& layout) {
  std::vector<std::string> students;
  std::vector<std::string> assessments;
  std::vector<std::vector<int>> received;
  try {
    students = layout.at("students").get<std::vector<std::string>>();
    assessments = layout.at("assessments").get<std::vector<std::string>>();
    received = layout.at("grades_received").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataSchema, std::string("bad layout: ") + e.what());
  }
  auto interval_of = [&](const std::string& name) {
    int col = draws.column(name);
    if (col < 0) throw Error(ErrorCode::DataSchema, "draws lack column " + name);
    return posterior_interval(draws.values.col(col));
  };
  auto row = [](std::string& out, const char* kind, const std::string& student, const std::string& assessment,
                const Interval& iv, bool prior_only) {
    out += std::string(kind) + ',' + student + ',' + assessment + ',' + format_double(iv.point) + ',' +
           format_double(iv.lower) + ',' + format_double(iv.upper) + ',' + (prior_only ? "1" : "0") + '\n';
  };

  if (draws.column("score[1,1]") < 0) {
    throw Error(ErrorCode::UnsupportedVariant, "fit has no true-score functionals");
  }
  std::string out = "kind,student,assessment,mean,q2.5,q97.5,prior_only\n";
  for (std::size_t i = 0; i < students.size(); ++i) {
    for (std::size_t a = 0; a < assessments.size(); ++a) {
      std::string name = "score[" + std::to_string(i + 1) + "," + std::to_string(a + 1) + "]";
      bool prior_only = i >= received.size() || a >= received[i].size() || received[i][a] == 0;
      row(out, "score", students[i], assessments[a], interval_of(name), prior_only);
    }
  }
  for (const char* kind : {"bias", "phi"}) {
    if (draws.column(std::string(kind) + "[1]") < 0) continue;
    for (std::size_t i = 0; i < students.size(); ++i) {
      row(out, kind, students[i], "", interval_of(std::string(kind) + "[" + std::to_string(i + 1) + "]"), false);
    }
  }
  return out;
}

std::string score_fit_dir(const std::filesystem::path& dir) {
  nlohmann::json layout;
  try {
    layout = nlohmann::json::parse(read_text(dir / "layout.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::DataSchema, std::string("bad layout.json: ") + e.what());
  }
  return scores_csv(read_draws_csv(dir / "draws.csv"), layout);
}

DrawTable read_draws_csv(const std::filesystem::path& path) {
  NumericCsv csv = read_numeric_csv(path);
  if (csv.header.size() < 2 || csv.header[0] != "chain" || csv.header[1] != "iteration") {
    throw Error(ErrorCode::DataSchema, path.string() + " must start with chain,iteration columns");
  }
  DrawTable t;
  t.names.assign(csv.header.begin() + 2, csv.header.end());
  t.values.resize(static_cast<Eigen::Index>(csv.rows.size()), static_cast<Eigen::Index>(t.names.size()));
  int chains = 0;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    chains = std::max(chains, static_cast<int>(csv.rows[r][0]));
    for (std::size_t k = 0; k < t.names.size(); ++k) t.values(r, k) = csv.rows[r][k + 2];
  }
  t.chains = chains;
  t.draws_per_chain = chains > 0 ? static_cast<int>(csv.rows.size()) / chains : 0;
  if (static_cast<std::size_t>(t.chains) * t.draws_per_chain != csv.rows.size()) {
    throw Error(ErrorCode::DataSchema, "chains in " + path.string() + " have unequal lengths");
  }
  return t;
}

Eigen::MatrixXd read_pointwise_csv(const std::filesystem::path& path) {
  return read_draws_csv(path).values;
}

}  // namespace peergrade
