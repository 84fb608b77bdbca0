#include "tilenet/harness.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace tilenet {

using json = nlohmann::json;
namespace fs = std::filesystem;

ModelKind parse_model_kind(std::string_view s) {
  if (s == "tile") return ModelKind::Tile;
  if (s == "pointer") return ModelKind::Pointer;
  if (s == "utility") return ModelKind::Utility;
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "' (expected tile, pointer or utility)");
}

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Tile: return "tile";
    case ModelKind::Pointer: return "pointer";
    case ModelKind::Utility: return "utility";
  }
  return "?";
}

namespace {

// Reads one JSON object, tracking which keys were consumed so leftovers can be
// reported as unknown fields.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw UserError(where(key) + ": " + msg);
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const std::string& key, std::uint64_t& out, bool) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of non-negative integers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_unsigned()) fail(key, "expected an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void get(const std::string& key, std::vector<std::uint64_t>& out, bool) {
    std::vector<std::size_t> tmp;
    if (j_.contains(key)) {
      get(key, tmp);
      out.assign(tmp.begin(), tmp.end());
    }
  }

  // Enum fields parsed by a string parser; its message is prefixed with the path.
  template <class T, class Parse>
  void get_enum(const std::string& key, T& out, Parse parse) {
    std::string s;
    get(key, s);
    if (!j_.contains(key)) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      fail(key, e.what());
    }
  }
  template <class T, class Parse>
  void get_enum(const std::string& key, std::optional<T>& out, Parse parse) {
    if (!j_.contains(key)) return;
    T v{};
    get_enum(key, v, parse);
    out = v;
  }

  void path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string s;
    get(key, s);
    if (!j_.contains(key)) return;
    fs::path p(s);
    out = p.is_relative() && !base.empty() ? base / p : p;
  }

  Fields child(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Fields(v ? *v : empty, where(key));
  }

  void positive(const std::string& key, double v) const {
    if (!(v > 0.0)) fail(key, "must be positive");
  }
  void at_least_one(const std::string& key, std::size_t v) const {
    if (v == 0) fail(key, "must be at least 1");
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) fail(it.key(), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

void parse_dataset(Fields f, DatasetConfig& d, const fs::path& base) {
  f.path("dir", d.dir, base);
  f.get("seed", d.seed, true);
  f.get("users", d.users);
  f.get("items", d.items);
  f.get("user_dim", d.user_dim);
  f.get("item_dim", d.item_dim);
  f.get("pages", d.pages);
  f.get("candidates", d.candidates);
  std::vector<std::size_t> grid{d.grid.rows, d.grid.cols};
  f.get("grid", grid);
  if (grid.size() != 2 || grid[0] == 0 || grid[1] == 0) f.fail("grid", "expected [rows, cols] with both positive");
  d.grid = {grid[0], grid[1]};
  f.at_least_one("users", d.users);
  f.at_least_one("items", d.items);
  f.at_least_one("user_dim", d.user_dim);
  f.at_least_one("item_dim", d.item_dim);
  f.at_least_one("pages", d.pages);
  f.at_least_one("candidates", d.candidates);
  if (d.candidates < d.grid.tiles()) {
    f.fail("candidates", std::to_string(d.candidates) + " candidates cannot fill " +
                             std::to_string(d.grid.tiles()) + " tiles");
  }
  if (d.candidates > d.items) {
    f.fail("candidates", std::to_string(d.candidates) + " candidates exceed the " +
                             std::to_string(d.items) + " items");
  }
  f.done();
}

void parse_environment(Fields f, EnvironmentConfig& e, const fs::path& base) {
  f.get_enum("scan", e.scan, parse_scan_kind);
  if (const json* v = f.find("real_permutation")) {
    if (v->is_string()) {
      fs::path p(v->get<std::string>());
      e.real_permutation_file = p.is_relative() && !base.empty() ? base / p : p;
    } else if (v->is_array()) {
      for (const json& x : *v) {
        if (!x.is_number_unsigned()) f.fail("real_permutation", "expected tile indices");
        e.real_permutation.push_back(x.get<std::size_t>());
      }
    } else {
      f.fail("real_permutation", "expected an array of tile indices or a CSV path");
    }
  }
  f.get("real_seed", e.real_seed, true);
  f.get("eta", e.eta);
  if (!(e.eta >= 0.0)) f.fail("eta", "must be non-negative");
  f.get_enum("dynamics", e.dynamics, parse_dynamics);
  f.get("similarity_quantile", e.similarity_quantile);
  if (!(e.similarity_quantile > 0.0 && e.similarity_quantile < 1.0)) {
    f.fail("similarity_quantile", "must lie in (0, 1)");
  }
  f.get("preference_seed", e.preference_seed, true);
  if (f.find("constant_click_probability")) {
    double c = 0.0;
    f.get("constant_click_probability", c);
    if (!(c >= 0.0 && c <= 1.0)) f.fail("constant_click_probability", "must lie in [0, 1]");
    e.constant_click_probability = c;
  }
  f.get_enum("reward", e.reward, parse_reward_kind);
  f.get_enum("click_mode", e.click_mode, parse_click_mode);
  if (e.click_mode == ClickMode::Expected && e.dynamics != Dynamics::None) {
    f.fail("click_mode", "expected click mode requires dynamics 'none'");
  }
  f.done();
}

void parse_model(Fields f, ModelConfig& m) {
  f.get_enum("kind", m.kind, parse_model_kind);
  f.get_enum("layout", m.layout, parse_scan_kind);
  f.get("attention_dim", m.attention_dim);
  f.get("attention_heads", m.attention_heads);
  f.get("attention_layers", m.attention_layers);
  std::size_t hidden = 0;
  f.get("hidden", hidden);
  if (hidden > 0) m.hidden = hidden;
  f.get("pointer_dim", m.pointer_dim);
  f.get_enum("cell", m.cell, parse_cell_kind);
  f.get("critic_position_width", m.critic_position_width);
  f.at_least_one("attention_dim", m.attention_dim);
  f.at_least_one("attention_heads", m.attention_heads);
  f.at_least_one("attention_layers", m.attention_layers);
  f.at_least_one("pointer_dim", m.pointer_dim);
  f.at_least_one("critic_position_width", m.critic_position_width);
  if (m.attention_dim % m.attention_heads != 0) {
    f.fail("attention_heads", "must divide attention_dim");
  }
  f.done();
}

void parse_train(Fields f, TrainSection& s) {
  TrainConfig& t = s.train;
  f.get("batch_size", t.batch_size);
  f.at_least_one("batch_size", t.batch_size);
  f.get("steps", t.steps);
  f.get("policy_lr", t.policy_lr);
  f.positive("policy_lr", t.policy_lr);
  f.get("critic_lr", t.critic_lr);
  f.positive("critic_lr", t.critic_lr);
  f.get_enum("advantage", t.advantage, parse_advantage_mode);
  f.get("checkpoint_every", t.checkpoint_every);
  f.get("eval_every", t.eval_every);
  f.get("eval_seeds", t.eval_seeds, true);
  if (t.eval_seeds.empty()) f.fail("eval_seeds", "must not be empty");
  f.get("entropy_coef", t.entropy_coef);
  if (t.entropy_coef < 0.0) f.fail("entropy_coef", "must be non-negative");
  f.get("normalize_advantage", t.normalize_advantage);
  f.get_enum("critic_reduction", t.critic_reduction, [](std::string_view v) {
    if (v == "mean") return LossReduction::Mean;
    if (v == "sum") return LossReduction::Sum;
    throw std::invalid_argument("expected 'mean' or 'sum'");
  });
  f.get("grad_clip", t.grad_clip);
  if (t.grad_clip < 0.0) f.fail("grad_clip", "must be non-negative");
  f.get_enum("click_mode", s.click_mode, parse_click_mode);
  f.get_enum("reward", s.reward, parse_reward_kind);
  f.done();
}

void parse_ranker(Fields f, RankerConfig& r) {
  f.get("hidden", r.hidden);
  for (auto w : r.hidden) {
    if (w == 0) f.fail("hidden", "widths must be positive");
  }
  f.get("epochs", r.epochs);
  f.get("batch_size", r.batch_size);
  f.at_least_one("batch_size", r.batch_size);
  f.get("learning_rate", r.learning_rate);
  f.positive("learning_rate", r.learning_rate);
  f.done();
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const fs::path& file, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UserError(file.string() + ":" + std::to_string(line) + ": malformed number '" + s + "'");
  }
}

std::size_t parse_index(const std::string& s, const fs::path& file, std::size_t line) {
  const double v = parse_number(s, file, line);
  if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw UserError(file.string() + ":" + std::to_string(line) + ": expected a non-negative integer, got '" + s + "'");
  }
  return static_cast<std::size_t>(v);
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open " + path.string());
  return in;
}

// Reads a CSV with a header of exactly `width` columns.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::size_t width) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw UserError(path.string() + ": empty file");
  if (split_csv_line(line).size() != width) {
    throw UserError(path.string() + ":1: expected " + std::to_string(width) + " header columns");
  }
  std::vector<std::vector<std::string>> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != width) {
      throw UserError(path.string() + ":" + std::to_string(n) + ": expected " + std::to_string(width) +
                      " columns, found " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

Tensor read_feature_table(const fs::path& path, std::size_t expected_rows, std::size_t dim) {
  const auto rows = read_csv(path, dim + 1);
  if (rows.size() != expected_rows) {
    throw UserError(path.string() + ": expected " + std::to_string(expected_rows) + " rows, found " +
                    std::to_string(rows.size()));
  }
  Tensor out = Tensor::matrix(expected_rows, dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (parse_index(rows[r][0], path, r + 2) != r) {
      throw UserError(path.string() + ":" + std::to_string(r + 2) + ": ids must be 0..N-1 in order");
    }
    for (std::size_t c = 0; c < dim; ++c) out.at(r, c) = parse_number(rows[r][c + 1], path, r + 2);
  }
  return out;
}

void write_feature_table(const fs::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write " + path.string());
  out << "id";
  for (std::size_t c = 0; c < t.cols(); ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t r = 0; r < t.rows(); ++r) {
    out << r;
    for (std::size_t c = 0; c < t.cols(); ++c) out << ',' << format_double(t.at(r, c));
    out << '\n';
  }
}

json policy_json(const PolicyConfig& p) {
  json j = {{"feature_dim", p.feature_dim},   {"tile_dim", p.tile_dim},
            {"attention_dim", p.attention_dim}, {"attention_heads", p.attention_heads},
            {"attention_layers", p.attention_layers}, {"hidden", p.hidden},
            {"pointer_dim", p.pointer_dim},   {"cell", std::string(to_string(p.cell))}};
  j["fixed_layout"] = p.fixed_layout ? json(*p.fixed_layout) : json(nullptr);
  return j;
}

PolicyConfig policy_from_json(const json& j) {
  PolicyConfig p;
  p.feature_dim = j.at("feature_dim");
  p.tile_dim = j.at("tile_dim");
  p.attention_dim = j.at("attention_dim");
  p.attention_heads = j.at("attention_heads");
  p.attention_layers = j.at("attention_layers");
  p.hidden = j.at("hidden");
  p.pointer_dim = j.at("pointer_dim");
  p.cell = parse_cell_kind(j.at("cell").get<std::string>());
  if (!j.at("fixed_layout").is_null()) p.fixed_layout = j.at("fixed_layout").get<std::vector<std::size_t>>();
  return p;
}

json critic_json(const CriticConfig& c) {
  return {{"feature_dim", c.feature_dim},     {"tile_dim", c.tile_dim},
          {"num_tiles", c.num_tiles},         {"attention_dim", c.attention_dim},
          {"attention_heads", c.attention_heads}, {"attention_layers", c.attention_layers},
          {"position_width", c.position_width}};
}

CriticConfig critic_from_json(const json& j) {
  CriticConfig c;
  c.feature_dim = j.at("feature_dim");
  c.tile_dim = j.at("tile_dim");
  c.num_tiles = j.at("num_tiles");
  c.attention_dim = j.at("attention_dim");
  c.attention_heads = j.at("attention_heads");
  c.attention_layers = j.at("attention_layers");
  c.position_width = j.at("position_width");
  return c;
}

std::string scan_title(ScanKind k) {
  switch (k) {
    case ScanKind::Row: return "Row";
    case ScanKind::Col: return "Col";
    case ScanKind::Z: return "Z";
    case ScanKind::Real: return "Real";
  }
  return "?";
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    throw UserError("config: syntax error at line " + std::to_string(line) + ", column " +
                    std::to_string(col) + ": " + e.what());
  }
  ExperimentConfig cfg;
  Fields root(j, "");
  root.get("seed", cfg.seed, true);
  parse_dataset(root.child("dataset"), cfg.dataset, base_dir);
  parse_environment(root.child("environment"), cfg.environment, base_dir);
  parse_model(root.child("model"), cfg.model);
  parse_train(root.child("train"), cfg.train);
  parse_ranker(root.child("ranker"), cfg.ranker);
  root.get("eval_pages", cfg.eval_pages);
  root.path("output_dir", cfg.output_dir, base_dir);
  root.done();
  if (cfg.output_dir.is_relative() && !base_dir.empty() && !j.contains("output_dir")) {
    cfg.output_dir = base_dir / cfg.output_dir;
  }
  if (cfg.dataset.dir.is_relative() && !base_dir.empty() &&
      !(j.contains("dataset") && j["dataset"].contains("dir"))) {
    cfg.dataset.dir = base_dir / cfg.dataset.dir;
  }
  const EnvironmentConfig& env = cfg.environment;
  if (!env.real_permutation.empty()) {
    try {
      (void)scan_order(ScanKind::Real, cfg.dataset.grid, env.real_permutation);
    } catch (const std::invalid_argument& e) {
      throw UserError(std::string("environment.real_permutation: ") + e.what());
    }
  }
  cfg.ranker.seed = cfg.seed;
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_experiment_config(ss.str(), path.parent_path());
  } catch (const UserError& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

PageInstance Dataset::page(std::size_t index) const {
  const auto& cand = pages.at(index);
  Tensor user = Tensor::matrix(1, users.cols());
  for (std::size_t c = 0; c < users.cols(); ++c) user[c] = users.at(page_users.at(index), c);
  Tensor it = Tensor::matrix(cand.size(), items.cols());
  for (std::size_t i = 0; i < cand.size(); ++i) {
    for (std::size_t c = 0; c < items.cols(); ++c) it.at(i, c) = items.at(cand[i], c);
  }
  return PageInstance::make(std::move(user), std::move(it), grid);
}

std::vector<PageInstance> Dataset::instances(std::span<const std::size_t> indices) const {
  std::vector<PageInstance> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(page(i));
  return out;
}

DatasetFiles dataset_files(const fs::path& dir) {
  return {dir / "users.csv", dir / "items.csv", dir / "pages.csv"};
}

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t seed) {
  if (config.candidates > config.items) {
    throw UserError("dataset.candidates: " + std::to_string(config.candidates) + " candidates exceed the " +
                    std::to_string(config.items) + " items");
  }
  if (config.candidates < config.grid.tiles()) {
    throw UserError("dataset.candidates: fewer candidates than tiles");
  }
  const SeededRng root(seed, hash_string("dataset"));
  Dataset d;
  d.grid = config.grid;
  d.users = Tensor::matrix(config.users, config.user_dim);
  d.items = Tensor::matrix(config.items, config.item_dim);
  SeededRng ur = root.derive("users");
  for (double& v : d.users.values()) v = ur.normal();
  SeededRng ir = root.derive("items");
  for (double& v : d.items.values()) v = ir.normal();
  for (std::size_t p = 0; p < config.pages; ++p) {
    SeededRng rng = root.derive("page", p);
    d.page_users.push_back(rng.below(config.users));
    // Partial Fisher-Yates: the first n entries of a uniform shuffle.
    std::vector<std::size_t> ids(config.items);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    for (std::size_t i = 0; i < config.candidates; ++i) {
      std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
    }
    ids.resize(config.candidates);
    d.pages.push_back(std::move(ids));
  }
  return d;
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  const DatasetFiles files = dataset_files(dir);
  write_feature_table(files.users, data.users);
  write_feature_table(files.items, data.items);
  std::ofstream out(files.pages, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write " + files.pages.string());
  const std::size_t n = data.pages.empty() ? 0 : data.pages.front().size();
  out << "user_id";
  for (std::size_t i = 0; i < n; ++i) out << ",c" << i;
  out << '\n';
  for (std::size_t p = 0; p < data.pages.size(); ++p) {
    out << data.page_users[p];
    for (auto id : data.pages[p]) out << ',' << id;
    out << '\n';
  }
}

DatasetFiles gen_dataset(const DatasetConfig& config, std::uint64_t seed) {
  write_dataset(generate_dataset(config, seed), config.dir);
  return dataset_files(config.dir);
}

Dataset load_dataset(const DatasetConfig& config) {
  const DatasetFiles files = dataset_files(config.dir);
  for (const fs::path& p : {files.users, files.items, files.pages}) {
    if (!fs::exists(p)) throw UserError("missing dataset file " + p.string() + " (run gen-data first)");
  }
  Dataset d;
  d.grid = config.grid;
  d.users = read_feature_table(files.users, config.users, config.user_dim);
  d.items = read_feature_table(files.items, config.items, config.item_dim);
  const auto rows = read_csv(files.pages, config.candidates + 1);
  if (rows.size() != config.pages) {
    throw UserError(files.pages.string() + ": expected " + std::to_string(config.pages) + " pages, found " +
                    std::to_string(rows.size()));
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t line = r + 2;
    const std::size_t user = parse_index(rows[r][0], files.pages, line);
    if (user >= config.users) throw UserError(files.pages.string() + ":" + std::to_string(line) + ": unknown user id");
    std::vector<std::size_t> ids;
    std::set<std::size_t> seen;
    for (std::size_t c = 1; c < rows[r].size(); ++c) {
      const std::size_t id = parse_index(rows[r][c], files.pages, line);
      if (id >= config.items) throw UserError(files.pages.string() + ":" + std::to_string(line) + ": unknown item id");
      if (!seen.insert(id).second) {
        throw UserError(files.pages.string() + ":" + std::to_string(line) + ": repeated candidate " + rows[r][c]);
      }
      ids.push_back(id);
    }
    d.page_users.push_back(user);
    d.pages.push_back(std::move(ids));
  }
  return d;
}

DatasetSplit split_dataset(std::size_t pages, std::uint64_t seed) {
  SeededRng rng(seed, hash_string("split"));
  const std::vector<std::size_t> order = random_permutation(pages, rng);
  const std::size_t n_train = pages * 70 / 100;
  const std::size_t n_val = pages * 15 / 100;
  DatasetSplit s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.validation.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

std::vector<std::size_t> resolve_real_permutation(const EnvironmentConfig& config, GridShape grid) {
  std::vector<std::size_t> perm = config.real_permutation;
  if (perm.empty() && !config.real_permutation_file.empty()) {
    std::ifstream in = open_input(config.real_permutation_file);
    std::string line;
    std::getline(in, line);
    for (const std::string& cell : split_csv_line(line)) {
      perm.push_back(parse_index(cell, config.real_permutation_file, 1));
    }
  }
  if (perm.empty()) {
    SeededRng rng(config.real_seed, hash_string("real-permutation"));
    perm = random_permutation(grid.tiles(), rng);
  }
  try {
    (void)scan_order(ScanKind::Real, grid, perm);
  } catch (const std::invalid_argument& e) {
    throw UserError(std::string("environment.real_permutation: ") + e.what());
  }
  return perm;
}

EnvironmentSpec make_environment(const EnvironmentConfig& config, const DatasetConfig& data) {
  EnvironmentSpec spec;
  spec.scan = config.scan;
  spec.real_permutation = resolve_real_permutation(config, data.grid);
  spec.eta = config.eta;
  spec.dynamics = config.dynamics;
  spec.similarity_quantile = config.similarity_quantile;
  spec.preference = make_ground_truth_preference(config.preference_seed, data.user_dim, data.item_dim);
  spec.preference.constant = config.constant_click_probability;
  spec.reward = config.reward;
  spec.click_mode = config.click_mode;
  spec.validate(data.grid.tiles());
  return spec;
}

PolicyConfig policy_config(const ModelConfig& model, const DatasetConfig& data,
                           const std::vector<std::size_t>& layout_order) {
  PolicyConfig p;
  p.feature_dim = data.user_dim + data.item_dim;
  p.tile_dim = 2;
  p.attention_dim = model.attention_dim;
  p.attention_heads = model.attention_heads;
  p.attention_layers = model.attention_layers;
  p.pointer_dim = model.pointer_dim;
  p.cell = model.cell;
  if (model.kind == ModelKind::Pointer) {
    p.hidden = model.hidden.value_or(128);
    p.fixed_layout = layout_order;
  } else {
    p.hidden = model.hidden.value_or(64);
  }
  return p;
}

CriticConfig critic_config(const ModelConfig& model, const DatasetConfig& data) {
  CriticConfig c;
  c.feature_dim = data.user_dim + data.item_dim;
  c.tile_dim = 2;
  c.num_tiles = data.grid.tiles();
  c.attention_dim = model.attention_dim;
  c.attention_heads = model.attention_heads;
  c.attention_layers = model.attention_layers;
  c.position_width = model.critic_position_width;
  return c;
}

std::string model_metadata(ModelKind kind, ScanKind layout, GridShape grid, const PolicyConfig* policy,
                           const CriticConfig* critic, const RankerConfig* ranker, std::size_t feature_dim) {
  json j = {{"kind", std::string(to_string(kind))},
            {"layout", std::string(to_string(layout))},
            {"grid", {grid.rows, grid.cols}},
            {"feature_dim", feature_dim}};
  if (policy) j["policy"] = policy_json(*policy);
  if (critic) j["critic"] = critic_json(*critic);
  if (ranker) j["ranker"] = {{"hidden", ranker->hidden}};
  return j.dump();
}

LoadedModel load_model(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw UserError("missing checkpoint " + checkpoint.string());
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  LoadedModel m;
  try {
    const json j = json::parse(ckpt.metadata);
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.layout = parse_scan_kind(j.at("layout").get<std::string>());
    m.grid = {j.at("grid").at(0), j.at("grid").at(1)};
    if (m.kind == ModelKind::Utility) {
      RankerConfig rc;
      rc.hidden = j.at("ranker").at("hidden").get<std::vector<std::size_t>>();
      m.ranker = std::make_unique<UtilityRanker>(j.at("feature_dim").get<std::size_t>(), rc);
      restore_group(ckpt.group("ranker"), m.ranker->parameters());
    } else {
      m.policy = std::make_unique<TilePolicy>(policy_from_json(j.at("policy")), 0);
      m.critic = std::make_unique<Critic>(critic_from_json(j.at("critic")), 0);
      restore_checkpoint(ckpt, *m.policy, m.critic.get());
    }
  } catch (const json::exception& e) {
    throw CheckpointError(checkpoint.string() + ": unreadable model metadata: " + e.what());
  }
  return m;
}

std::string LoadedModel::name(std::optional<ScanKind> ranker_layout) const {
  switch (kind) {
    case ModelKind::Tile: return "Tile Networks";
    case ModelKind::Pointer: return scan_title(layout) + "-Pointer";
    case ModelKind::Utility: return scan_title(ranker_layout.value_or(layout)) + "-Ranker";
  }
  return "?";
}

PlacementFn LoadedModel::placement(std::optional<ScanKind> ranker_layout) const {
  if (kind != ModelKind::Utility) return greedy_placement(*policy);
  const FixedLayout layout_order = FixedLayout::make(ranker_layout.value_or(layout), grid);
  const UtilityRanker* r = ranker.get();
  return [r, layout_order](const PageInstance& page, std::size_t) {
    return fixed_layout_place(r->scores(page), layout_order, page.num_tiles());
  };
}

namespace {

void write_validation_report(const fs::path& path, std::span<const ReportRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UserError("cannot write " + path.string());
  write_report_csv(out, rows);
}

std::vector<std::size_t> head(std::vector<std::size_t> v, std::size_t n) {
  if (n > 0 && v.size() > n) v.resize(n);
  return v;
}

}  // namespace

TrainOutcome run_training(const ExperimentConfig& config) {
  const Dataset data = load_dataset(config.dataset);
  const DatasetSplit split = split_dataset(data.pages.size(), config.dataset.seed);
  const std::vector<PageInstance> train_pages = data.instances(split.train);
  const std::vector<PageInstance> val_pages = data.instances(head(split.validation, config.eval_pages));
  if (train_pages.empty()) throw UserError("dataset: no training pages");
  const EnvironmentSpec env = make_environment(config.environment, config.dataset);
  const std::size_t feature_dim = config.dataset.user_dim + config.dataset.item_dim;
  const std::string env_name = std::string(to_string(env.scan));
  const SeededRng root(config.seed, hash_string("experiment"));
  fs::create_directories(config.output_dir);

  TrainOutcome outcome;
  std::vector<ReportRow> rows;
  const auto& eval_seeds = config.train.train.eval_seeds;
  if (config.model.kind == ModelKind::Utility) {
    RankerConfig rc = config.ranker;
    rc.seed = root.derive("ranker").next_u64();
    UtilityRanker ranker(feature_dim, rc);
    const ClickDataset log = collect_click_log(train_pages, env, root.derive("click-log").next_u64());
    AdamState opt;
    train_utility_ranker(ranker, log, &opt);
    Checkpoint ckpt;
    ckpt.metadata = model_metadata(ModelKind::Utility, config.model.layout, config.dataset.grid, nullptr,
                                   nullptr, &rc, feature_dim);
    ckpt.step = opt.step;
    ckpt.groups.push_back(capture_group("ranker", ranker.parameters(), &opt));
    outcome.checkpoint = config.output_dir / "final.tnck";
    save_checkpoint(outcome.checkpoint, ckpt);
    for (ScanKind layout : {ScanKind::Row, ScanKind::Col, ScanKind::Z}) {
      const FixedLayout order = FixedLayout::make(layout, config.dataset.grid);
      const PlacementFn place = [&](const PageInstance& page, std::size_t) {
        return fixed_layout_place(ranker.scores(page), order, page.num_tiles());
      };
      rows.push_back({scan_title(layout) + "-Ranker", env_name, evaluate_policy(place, env, val_pages, eval_seeds)});
    }
    outcome.validation = rows.front().report;
  } else {
    const std::vector<std::size_t> layout =
        scan_order(config.model.layout, config.dataset.grid, env.real_permutation);
    const PolicyConfig pc = policy_config(config.model, config.dataset, layout);
    const CriticConfig cc = critic_config(config.model, config.dataset);
    TilePolicy policy(pc, root.derive("policy").next_u64());
    Critic critic(cc, root.derive("critic").next_u64());
    TrainConfig tc = config.train.train;
    tc.seed = root.derive("train").next_u64();
    tc.environment = env;
    if (config.train.click_mode) tc.environment.click_mode = *config.train.click_mode;
    if (config.train.reward) tc.environment.reward = *config.train.reward;
    tc.environment.validate(config.dataset.grid.tiles());
    tc.eval_environment = env;
    tc.output_dir = config.output_dir;
    tc.metadata = model_metadata(config.model.kind, config.model.layout, config.dataset.grid, &pc, &cc,
                                 nullptr, feature_dim);
    const TrainResult result = train(policy, critic, train_pages, val_pages, tc);
    outcome.diverged = result.diverged;
    outcome.error = result.error;
    outcome.checkpoint = config.output_dir / (result.diverged ? "last_good.tnck" : "final.tnck");
    const std::string name = config.model.kind == ModelKind::Tile ? "Tile Networks"
                                                                  : scan_title(config.model.layout) + "-Pointer";
    rows.push_back({name, env_name, evaluate_policy(greedy_placement(policy), env, val_pages, eval_seeds)});
    outcome.validation = rows.front().report;
  }
  write_validation_report(config.output_dir / "validation_report.csv", rows);
  return outcome;
}

void write_heatmap_csv(std::ostream& os, GridShape grid, std::span<const double> priority) {
  if (priority.size() != grid.tiles()) throw std::invalid_argument("heatmap size does not match the grid");
  os << "row,col,priority\n";
  for (std::size_t t = 0; t < priority.size(); ++t) {
    os << grid.row_of(t) << ',' << grid.col_of(t) << ',' << format_double(priority[t]) << '\n';
  }
}

void write_heatmap_svg(std::ostream& os, GridShape grid, std::span<const double> priority) {
  if (priority.size() != grid.tiles()) throw std::invalid_argument("heatmap size does not match the grid");
  constexpr int cell = 60;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << grid.cols * cell << "\" height=\""
     << grid.rows * cell << "\">\n";
  for (std::size_t t = 0; t < priority.size(); ++t) {
    // Tiles viewed first are drawn lightest.
    const int level = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(priority[t], 0.0, 1.0))));
    os << "  <rect x=\"" << grid.col_of(t) * cell << "\" y=\"" << grid.row_of(t) * cell << "\" width=\"" << cell
       << "\" height=\"" << cell << "\" fill=\"rgb(" << level << ',' << level << ',' << level
       << ")\" stroke=\"black\"/>\n";
  }
  os << "</svg>\n";
}

}  // namespace tilenet
