/*
 * Copyright 2026 The FedOA Simulator Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fedoa/experiment_file.h"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "fedoa/errors.h"

namespace fedoa {
namespace {

using nlohmann::json;

struct Value {
  // Raw scalar tokens; strings keep their quotes stripped and are flagged.
  struct Scalar {
    std::string text;
    bool quoted = false;
  };
  std::vector<Scalar> items;
  bool is_list = false;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_string = !in_string;
    if (s[i] == '#' && !in_string) return s.substr(0, i);
  }
  return s;
}

[[noreturn]] void fail(std::size_t line, const std::string& msg) {
  throw ConfigError("line " + std::to_string(line) + ": " + msg);
}

Value::Scalar parse_scalar(std::string_view tok, std::size_t line) {
  tok = trim(tok);
  if (tok.empty()) fail(line, "missing value");
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"') fail(line, "unterminated string");
    const auto inner = tok.substr(1, tok.size() - 2);
    if (inner.find('"') != std::string_view::npos) {
      fail(line, "quotes inside strings are not supported");
    }
    return {std::string(inner), true};
  }
  return {std::string(tok), false};
}

Value parse_value(std::string_view raw, std::size_t line) {
  raw = trim(raw);
  Value v;
  if (!raw.empty() && raw.front() == '[') {
    if (raw.back() != ']') fail(line, "unterminated list");
    v.is_list = true;
    const auto inner = trim(raw.substr(1, raw.size() - 2));
    if (inner.empty()) return v;
    std::size_t start = 0;
    bool in_string = false;
    for (std::size_t i = 0; i <= inner.size(); ++i) {
      if (i < inner.size() && inner[i] == '"') in_string = !in_string;
      if (i == inner.size() || (inner[i] == ',' && !in_string)) {
        v.items.push_back(parse_scalar(inner.substr(start, i - start), line));
        start = i + 1;
      }
    }
    return v;
  }
  v.items.push_back(parse_scalar(raw, line));
  return v;
}

double to_double(const Value::Scalar& s, std::size_t line) {
  if (s.quoted) fail(line, "expected a number, got a string");
  double out = 0.0;
  const char* first = s.text.data();
  const char* last = first + s.text.size();
  if (!s.text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    fail(line, "invalid number '" + s.text + "'");
  }
  return out;
}

std::uint64_t to_uint(const Value::Scalar& s, std::size_t line) {
  if (s.quoted) fail(line, "expected an integer, got a string");
  std::uint64_t out = 0;
  const char* first = s.text.data();
  const char* last = first + s.text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    fail(line, "invalid non-negative integer '" + s.text + "'");
  }
  return out;
}

bool to_bool(const Value::Scalar& s, std::size_t line) {
  if (!s.quoted && s.text == "true") return true;
  if (!s.quoted && s.text == "false") return false;
  fail(line, "expected true or false");
}

const std::string& to_string_value(const Value::Scalar& s, std::size_t line) {
  if (!s.quoted) fail(line, "expected a quoted string");
  return s.text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(ExperimentFile&, const Value&, std::size_t)>;

const Value::Scalar& single(const Value& v, std::size_t line) {
  if (v.is_list || v.items.size() != 1) fail(line, "expected a single value");
  return v.items.front();
}

std::map<std::string, std::map<std::string, Setter>> make_schema() {
  auto num = [](auto member_fn) -> Setter {
    return [member_fn](ExperimentFile& f, const Value& v, std::size_t line) {
      member_fn(f) = to_double(single(v, line), line);
    };
  };
  auto uint = [](auto member_fn) -> Setter {
    return [member_fn](ExperimentFile& f, const Value& v, std::size_t line) {
      member_fn(f) = static_cast<std::remove_reference_t<decltype(member_fn(f))>>(
          to_uint(single(v, line), line));
    };
  };
  std::map<std::string, std::map<std::string, Setter>> s;
  s["experiment"] = {
      {"seed", uint([](ExperimentFile& f) -> std::uint64_t& { return f.fed.seed; })},
      {"baseline",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         try {
           f.fed.baseline = parse_baseline(to_string_value(single(v, line), line));
         } catch (const ConfigError& e) {
           fail(line, e.what());
         }
       }},
      {"output_dir",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         f.output_dir = to_string_value(single(v, line), line);
       }},
  };
  s["federation"] = {
      {"rounds", uint([](ExperimentFile& f) -> std::size_t& { return f.fed.rounds; })},
      {"local_steps", uint([](ExperimentFile& f) -> std::size_t& { return f.fed.local_steps; })},
      {"local_epochs", uint([](ExperimentFile& f) -> std::size_t& { return f.fed.local_epochs; })},
      {"eta_l", num([](ExperimentFile& f) -> double& { return f.fed.eta_l; })},
      {"eta_g", num([](ExperimentFile& f) -> double& { return f.fed.eta_g; })},
      {"lambda", num([](ExperimentFile& f) -> double& { return f.fed.reg.lambda; })},
      {"distance",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         try {
           f.fed.reg.kind =
               parse_distance_kind(to_string_value(single(v, line), line));
         } catch (const ConfigError& e) {
           fail(line, e.what());
         }
       }},
      {"alpha",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         if (!v.is_list) fail(line, "alpha must be a list");
         f.fed.alpha.clear();
         for (const auto& item : v.items) f.fed.alpha.push_back(to_double(item, line));
       }},
      {"sample_frac", num([](ExperimentFile& f) -> double& { return f.fed.sample_frac; })},
      {"batch_size", uint([](ExperimentFile& f) -> std::size_t& { return f.fed.batch_size; })},
      {"global_steps", uint([](ExperimentFile& f) -> std::size_t& { return f.fed.global_steps; })},
      {"global_full_batch",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         f.fed.global_full_batch = to_bool(single(v, line), line);
       }},
  };
  s["data"] = {
      {"n_clients", uint([](ExperimentFile& f) -> std::size_t& { return f.layout.n_clients; })},
      {"beta_lo", num([](ExperimentFile& f) -> double& { return f.layout.beta_lo; })},
      {"beta_hi", num([](ExperimentFile& f) -> double& { return f.layout.beta_hi; })},
      {"heldout_beta", num([](ExperimentFile& f) -> double& { return f.layout.heldout_beta; })},
      {"d_inv", uint([](ExperimentFile& f) -> std::size_t& { return f.layout.dims.d_inv; })},
      {"d_spu", uint([](ExperimentFile& f) -> std::size_t& { return f.layout.dims.d_spu; })},
      {"label_noise", num([](ExperimentFile& f) -> double& { return f.layout.dims.label_noise; })},
      {"n_train", uint([](ExperimentFile& f) -> std::size_t& { return f.layout.sizes.n_train; })},
      {"n_test", uint([](ExperimentFile& f) -> std::size_t& { return f.layout.sizes.n_test; })},
  };
  s["model"] = {
      {"hidden_dim", uint([](ExperimentFile& f) -> std::size_t& { return f.model.hidden_dim; })},
      {"layers", uint([](ExperimentFile& f) -> std::size_t& { return f.model.layers; })},
      {"activation",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         try {
           f.model.activation =
               parse_activation(to_string_value(single(v, line), line));
         } catch (const ConfigError& e) {
           fail(line, e.what());
         }
       }},
      {"rank", uint([](ExperimentFile& f) -> std::size_t& { return f.model.rank; })},
      {"lora_scale", num([](ExperimentFile& f) -> double& { return f.model.lora_scale; })},
  };
  s["sweep"] = {
      {"lambdas",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         if (!v.is_list) fail(line, "lambdas must be a list");
         f.sweep.lambdas.clear();
         for (const auto& item : v.items) f.sweep.lambdas.push_back(to_double(item, line));
       }},
      {"kinds",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         if (!v.is_list) fail(line, "kinds must be a list");
         f.sweep.kinds.clear();
         for (const auto& item : v.items) {
           try {
             f.sweep.kinds.push_back(
                 parse_distance_kind(to_string_value(item, line)));
           } catch (const ConfigError& e) {
             fail(line, e.what());
           }
         }
       }},
      {"baselines",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         if (!v.is_list) fail(line, "baselines must be a list");
         f.sweep.baselines.clear();
         for (const auto& item : v.items) {
           try {
             f.sweep.baselines.push_back(parse_baseline(to_string_value(item, line)));
           } catch (const ConfigError& e) {
             fail(line, e.what());
           }
         }
       }},
      {"seeds",
       [](ExperimentFile& f, const Value& v, std::size_t line) {
         if (!v.is_list) fail(line, "seeds must be a list");
         f.sweep.seeds.clear();
         for (const auto& item : v.items) f.sweep.seeds.push_back(to_uint(item, line));
       }},
  };
  return s;
}

void validate(const ExperimentFile& f) {
  f.fed.validate();
  f.model.validate();
  if (f.layout.n_clients < 2) throw ConfigError("n_clients must be >= 2");
  if (!f.fed.alpha.empty() && f.fed.alpha.size() != f.layout.n_clients) {
    throw ConfigError("alpha must list one weight per client");
  }
  for (double l : f.sweep.lambdas) {
    RegSpec{DistanceKind::kL2Sq, l}.validate();
  }
  // Builds the layout to check ranges and sizes.
  make_layout(f.layout.n_clients, f.layout.beta_lo, f.layout.beta_hi,
              f.layout.heldout_beta, f.layout.dims, f.layout.sizes);
}

template <typename T, typename Fn>
std::string list(const std::vector<T>& items, Fn&& render) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += render(items[i]);
  }
  return out + "]";
}

std::string quoted(std::string_view s) { return "\"" + std::string(s) + "\""; }

}  // namespace

ExperimentFile parse_experiment(std::string_view text) {
  static const auto schema = make_schema();
  ExperimentFile file;
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(
        pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, "malformed section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!schema.contains(section)) fail(line_no, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_no, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (section.empty()) fail(line_no, "key '" + key + "' outside a section");
    const auto& keys = schema.at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) {
      fail(line_no, "unknown key '" + key + "' in [" + section + "]");
    }
    if (!seen.insert(section + "." + key).second) {
      fail(line_no, "duplicate key '" + key + "' in [" + section + "]");
    }
    it->second(file, parse_value(line.substr(eq + 1), line_no), line_no);
  }
  validate(file);
  return file;
}

std::string serialize_experiment(const ExperimentFile& f) {
  std::ostringstream o;
  o << "[experiment]\n"
    << "seed = " << f.fed.seed << '\n'
    << "baseline = " << quoted(to_string(f.fed.baseline)) << '\n'
    << "output_dir = " << quoted(f.output_dir) << "\n\n";
  o << "[federation]\n"
    << "rounds = " << f.fed.rounds << '\n'
    << "local_steps = " << f.fed.local_steps << '\n'
    << "local_epochs = " << f.fed.local_epochs << '\n'
    << "eta_l = " << fmt(f.fed.eta_l) << '\n'
    << "eta_g = " << fmt(f.fed.eta_g) << '\n'
    << "lambda = " << fmt(f.fed.reg.lambda) << '\n'
    << "distance = " << quoted(to_string(f.fed.reg.kind)) << '\n'
    << "alpha = " << list(f.fed.alpha, fmt) << '\n'
    << "sample_frac = " << fmt(f.fed.sample_frac) << '\n'
    << "batch_size = " << f.fed.batch_size << '\n'
    << "global_steps = " << f.fed.global_steps << '\n'
    << "global_full_batch = " << (f.fed.global_full_batch ? "true" : "false")
    << "\n\n";
  o << "[data]\n"
    << "n_clients = " << f.layout.n_clients << '\n'
    << "beta_lo = " << fmt(f.layout.beta_lo) << '\n'
    << "beta_hi = " << fmt(f.layout.beta_hi) << '\n'
    << "heldout_beta = " << fmt(f.layout.heldout_beta) << '\n'
    << "d_inv = " << f.layout.dims.d_inv << '\n'
    << "d_spu = " << f.layout.dims.d_spu << '\n'
    << "label_noise = " << fmt(f.layout.dims.label_noise) << '\n'
    << "n_train = " << f.layout.sizes.n_train << '\n'
    << "n_test = " << f.layout.sizes.n_test << "\n\n";
  o << "[model]\n"
    << "hidden_dim = " << f.model.hidden_dim << '\n'
    << "layers = " << f.model.layers << '\n'
    << "activation = " << quoted(to_string(f.model.activation)) << '\n'
    << "rank = " << f.model.rank << '\n'
    << "lora_scale = " << fmt(f.model.lora_scale) << "\n\n";
  o << "[sweep]\n"
    << "lambdas = " << list(f.sweep.lambdas, fmt) << '\n'
    << "kinds = "
    << list(f.sweep.kinds, [](DistanceKind k) { return quoted(to_string(k)); })
    << '\n'
    << "baselines = "
    << list(f.sweep.baselines, [](Baseline b) { return quoted(to_string(b)); })
    << '\n'
    << "seeds = "
    << list(f.sweep.seeds, [](std::uint64_t s) { return std::to_string(s); })
    << '\n';
  return o.str();
}

json to_json(const ExperimentFile& f) {
  std::vector<std::string> kinds, baselines;
  for (auto k : f.sweep.kinds) kinds.emplace_back(to_string(k));
  for (auto b : f.sweep.baselines) baselines.emplace_back(to_string(b));
  return {
      {"experiment",
       {{"seed", f.fed.seed},
        {"baseline", std::string(to_string(f.fed.baseline))},
        {"output_dir", f.output_dir}}},
      {"federation",
       {{"rounds", f.fed.rounds},
        {"local_steps", f.fed.local_steps},
        {"local_epochs", f.fed.local_epochs},
        {"eta_l", f.fed.eta_l},
        {"eta_g", f.fed.eta_g},
        {"lambda", f.fed.reg.lambda},
        {"distance", std::string(to_string(f.fed.reg.kind))},
        {"alpha", f.fed.alpha},
        {"sample_frac", f.fed.sample_frac},
        {"batch_size", f.fed.batch_size},
        {"global_steps", f.fed.global_steps},
        {"global_full_batch", f.fed.global_full_batch}}},
      {"data",
       {{"n_clients", f.layout.n_clients},
        {"beta_lo", f.layout.beta_lo},
        {"beta_hi", f.layout.beta_hi},
        {"heldout_beta", f.layout.heldout_beta},
        {"d_inv", f.layout.dims.d_inv},
        {"d_spu", f.layout.dims.d_spu},
        {"label_noise", f.layout.dims.label_noise},
        {"n_train", f.layout.sizes.n_train},
        {"n_test", f.layout.sizes.n_test}}},
      {"model",
       {{"hidden_dim", f.model.hidden_dim},
        {"layers", f.model.layers},
        {"activation", std::string(to_string(f.model.activation))},
        {"rank", f.model.rank},
        {"lora_scale", f.model.lora_scale}}},
      {"sweep",
       {{"lambdas", f.sweep.lambdas},
        {"kinds", kinds},
        {"baselines", baselines},
        {"seeds", f.sweep.seeds}}},
  };
}

std::vector<SweepPoint> expand_sweep(const ExperimentFile& file) {
  const auto baselines = file.sweep.baselines.empty()
                             ? std::vector<Baseline>{file.fed.baseline}
                             : file.sweep.baselines;
  const auto kinds = file.sweep.kinds.empty()
                         ? std::vector<DistanceKind>{file.fed.reg.kind}
                         : file.sweep.kinds;
  const auto lambdas = file.sweep.lambdas.empty()
                           ? std::vector<double>{file.fed.reg.lambda}
                           : file.sweep.lambdas;
  const auto seeds = file.sweep.seeds.empty()
                         ? std::vector<std::uint64_t>{file.fed.seed}
                         : file.sweep.seeds;
  std::vector<SweepPoint> points;
  std::set<std::string> names;
  for (Baseline b : baselines) {
    for (DistanceKind k : kinds) {
      for (double l : lambdas) {
        for (std::uint64_t s : seeds) {
          SweepPoint p;
          p.config = file;
          p.config.sweep = {};
          p.config.fed.baseline = b;
          p.config.fed.reg.kind = k;
          p.config.fed.reg.lambda = l;
          p.config.fed.seed = s;
          p.name = std::string(to_string(b)) + "_" + std::string(to_string(k)) +
                   "_lambda" + short_fmt(l) + "_seed" + std::to_string(s);
          if (!names.insert(p.name).second) {
            throw ConfigError("sweep produces duplicate point " + p.name);
          }
          points.push_back(std::move(p));
        }
      }
    }
  }
  return points;
}

}  // namespace fedoa
