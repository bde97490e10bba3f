#include "cfa/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

namespace cfa {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  auto head = static_cast<unsigned char>(s[0]);
  if (!std::isalpha(head) && s[0] != '_') return false;
  for (char c : s) {
    auto u = static_cast<unsigned char>(c);
    if (!std::isalnum(u) && c != '_') return false;
  }
  return true;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_real(const std::string& tok, int line) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + tok.size() || tok.empty() || !std::isfinite(v))
    throw ParseError(line, "expected a number, got '" + tok + "'");
  return v;
}

int parse_int(const std::string& tok, int line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, "expected an integer, got '" + tok + "'");
  return v;
}

// F.x reference used by fix/start/bound directives.
LoadingKey parse_loading_ref(const std::string& tok, int line) {
  auto dot = tok.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == tok.size())
    throw ParseError(line, "expected factor.indicator reference, got '" + tok + "'");
  std::string factor = tok.substr(0, dot);
  std::string indicator = tok.substr(dot + 1);
  if (!is_identifier(factor) || !is_identifier(indicator))
    throw ParseError(line, "bad name in reference '" + tok + "'");
  return {factor, indicator};
}

std::string key_str(const LoadingKey& key) { return key.first + "." + key.second; }

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

double clip_into_open_interval(double value, double lower, double upper) {
  if (value > lower && value < upper) return value;
  if (lower == upper) return lower;
  const double margin =
      (std::isfinite(lower) && std::isfinite(upper)) ? (upper - lower) / 4.0 : 0.5;
  if (value <= lower) return lower + margin;
  return upper - margin;
}

ParseError::ParseError(int line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

bool ModelSpec::has_factor(const std::string& name) const {
  return std::find(factors.begin(), factors.end(), name) != factors.end();
}

bool ModelSpec::has_indicator(const std::string& name) const {
  return indicator_index(name) >= 0;
}

bool ModelSpec::has_loading(const LoadingKey& key) const {
  return std::find(loading_order.begin(), loading_order.end(), key) != loading_order.end();
}

int ModelSpec::indicator_index(const std::string& name) const {
  for (std::size_t i = 0; i < indicators.size(); ++i)
    if (indicators[i].name == name) return static_cast<int>(i);
  return -1;
}

int ModelSpec::factor_index(const std::string& name) const {
  for (std::size_t i = 0; i < factors.size(); ++i)
    if (factors[i] == name) return static_cast<int>(i);
  return -1;
}

ModelSpec parse_model_text(const std::string& text) {
  if (trim(text).empty()) throw ParseError(1, "empty model text");

  ModelSpec spec;
  // Which sides of each bound have been set, for duplicate detection.
  std::map<LoadingKey, std::pair<bool, bool>> bound_seen;
  std::map<std::string, bool> ordinal_seen;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::string line = trim(raw);
    if (line.empty()) continue;

    auto arrow = line.find("=~");
    if (arrow != std::string::npos) {
      std::string factor = trim(line.substr(0, arrow));
      if (!is_identifier(factor)) throw ParseError(line_no, "bad factor name '" + factor + "'");
      if (spec.has_factor(factor))
        throw ParseError(line_no, "duplicate declaration of factor " + factor);
      spec.factors.push_back(factor);

      std::string rhs = line.substr(arrow + 2);
      std::size_t pos = 0;
      int count = 0;
      while (pos <= rhs.size()) {
        auto plus = rhs.find('+', pos);
        std::string tok =
            trim(plus == std::string::npos ? rhs.substr(pos) : rhs.substr(pos, plus - pos));
        if (!is_identifier(tok))
          throw ParseError(line_no, "expected indicator name after '=~'");
        if (!spec.has_indicator(tok)) spec.indicators.push_back(Indicator{tok});
        LoadingKey key{factor, tok};
        if (spec.has_loading(key))
          throw ParseError(line_no, "duplicate loading " + key_str(key));
        spec.loading_order.push_back(key);
        ++count;
        if (plus == std::string::npos) break;
        pos = plus + 1;
      }
      if (count == 0) throw ParseError(line_no, "factor " + factor + " declares no indicators");
      continue;
    }

    auto tok = split_ws(line);
    const std::string& head = tok[0];

    if (head == "fix" || head == "start") {
      if (tok.size() != 4 || tok[2] != "=")
        throw ParseError(line_no, "expected '" + head + " F.x = value'");
      LoadingKey key = parse_loading_ref(tok[1], line_no);
      if (!spec.has_loading(key))
        throw ParseError(line_no, "unknown loading " + key_str(key));
      double value = parse_real(tok[3], line_no);
      if (head == "fix") {
        if (spec.fixed_loadings.count(key))
          throw ParseError(line_no, "duplicate fix for " + key_str(key));
        if (spec.loading_starts.count(key))
          throw ParseError(line_no, "loading " + key_str(key) + " has a start value and cannot be fixed");
        auto b = spec.loading_bounds.find(key);
        if (b != spec.loading_bounds.end() &&
            (value < b->second.lower || value > b->second.upper))
          throw ParseError(line_no, "fixed value for " + key_str(key) + " lies outside its bounds");
        spec.fixed_loadings[key] = value;
      } else {
        if (spec.loading_starts.count(key))
          throw ParseError(line_no, "duplicate start for " + key_str(key));
        if (spec.fixed_loadings.count(key))
          throw ParseError(line_no, "loading " + key_str(key) + " is fixed and cannot have a start value");
        spec.loading_starts[key] = value;
      }
      continue;
    }

    if (head == "bound") {
      if (tok.size() != 4 || (tok[2] != "lower" && tok[2] != "upper"))
        throw ParseError(line_no, "expected 'bound F.x lower|upper value'");
      LoadingKey key = parse_loading_ref(tok[1], line_no);
      if (!spec.has_loading(key))
        throw ParseError(line_no, "unknown loading " + key_str(key));
      double value = parse_real(tok[3], line_no);
      auto& seen = bound_seen[key];
      auto& bounds = spec.loading_bounds[key];
      if (tok[2] == "lower") {
        if (seen.first) throw ParseError(line_no, "duplicate lower bound for " + key_str(key));
        seen.first = true;
        bounds.lower = value;
      } else {
        if (seen.second) throw ParseError(line_no, "duplicate upper bound for " + key_str(key));
        seen.second = true;
        bounds.upper = value;
      }
      if (bounds.lower > bounds.upper)
        throw ParseError(line_no, "bound for " + key_str(key) + " has lower > upper");
      auto f = spec.fixed_loadings.find(key);
      if (f != spec.fixed_loadings.end() &&
          (f->second < bounds.lower || f->second > bounds.upper))
        throw ParseError(line_no, "fixed value for " + key_str(key) + " lies outside its bounds");
      continue;
    }

    if (head == "fixvar") {
      if (tok.size() != 4 || tok[2] != "=")
        throw ParseError(line_no, "expected 'fixvar F = value'");
      if (!spec.has_factor(tok[1]))
        throw ParseError(line_no, "unknown factor " + tok[1]);
      if (spec.fixed_factor_variances.count(tok[1]))
        throw ParseError(line_no, "duplicate fixvar for " + tok[1]);
      spec.fixed_factor_variances[tok[1]] = parse_real(tok[3], line_no);
      continue;
    }

    if (head == "ordinal") {
      if (tok.size() != 3) throw ParseError(line_no, "expected 'ordinal x C'");
      int idx = spec.indicator_index(tok[1]);
      if (idx < 0) throw ParseError(line_no, "unknown indicator " + tok[1]);
      if (ordinal_seen[tok[1]])
        throw ParseError(line_no, "duplicate ordinal declaration for " + tok[1]);
      ordinal_seen[tok[1]] = true;
      int c = parse_int(tok[2], line_no);
      if (c < 2) throw ParseError(line_no, "ordinal category count must be >= 2");
      spec.indicators[idx].kind = VarKind::Ordinal;
      spec.indicators[idx].categories = c;
      continue;
    }

    throw ParseError(line_no, "unknown directive '" + head + "'");
  }

  if (spec.factors.empty()) throw ParseError(line_no == 0 ? 1 : line_no, "no factor declared");
  return spec;
}

std::string serialize_model(const ModelSpec& spec) {
  std::ostringstream out;
  for (const auto& factor : spec.factors) {
    out << factor << " =~";
    bool first = true;
    for (const auto& key : spec.loading_order) {
      if (key.first != factor) continue;
      out << (first ? " " : " + ") << key.second;
      first = false;
    }
    out << "\n";
  }
  for (const auto& ind : spec.indicators)
    if (ind.kind == VarKind::Ordinal)
      out << "ordinal " << ind.name << " " << ind.categories << "\n";
  for (const auto& [factor, value] : spec.fixed_factor_variances)
    out << "fixvar " << factor << " = " << format_real(value) << "\n";
  for (const auto& [key, value] : spec.fixed_loadings)
    out << "fix " << key_str(key) << " = " << format_real(value) << "\n";
  for (const auto& [key, value] : spec.loading_starts)
    out << "start " << key_str(key) << " = " << format_real(value) << "\n";
  for (const auto& [key, bounds] : spec.loading_bounds) {
    if (std::isfinite(bounds.lower))
      out << "bound " << key_str(key) << " lower " << format_real(bounds.lower) << "\n";
    if (std::isfinite(bounds.upper))
      out << "bound " << key_str(key) << " upper " << format_real(bounds.upper) << "\n";
  }
  return out.str();
}

std::vector<std::string> validate_spec(const ModelSpec& spec) {
  std::vector<std::string> diags;

  for (const auto& factor : spec.factors) {
    bool any = false;
    for (const auto& key : spec.loading_order)
      if (key.first == factor) any = true;
    if (!any) diags.push_back("factor " + factor + " has no indicators");
  }
  for (const auto& ind : spec.indicators) {
    bool any = false;
    for (const auto& key : spec.loading_order)
      if (key.second == ind.name) any = true;
    if (!any) diags.push_back("indicator " + ind.name + " has no loading");
    if (ind.kind == VarKind::Ordinal && ind.categories < 2)
      diags.push_back("indicator " + ind.name + ": ordinal category count must be >= 2");
  }
  for (const auto& key : spec.loading_order) {
    if (!spec.has_factor(key.first))
      diags.push_back("loading " + key_str(key) + " references undeclared factor");
    if (!spec.has_indicator(key.second))
      diags.push_back("loading " + key_str(key) + " references undeclared indicator");
  }
  for (const auto& [key, value] : spec.fixed_loadings) {
    if (!spec.has_loading(key))
      diags.push_back("fix for unknown loading " + key_str(key));
    if (spec.loading_starts.count(key))
      diags.push_back("fixed loading " + key_str(key) + " has a start value");
  }
  for (const auto& [key, value] : spec.loading_starts)
    if (!spec.has_loading(key))
      diags.push_back("start for unknown loading " + key_str(key));
  for (const auto& [key, bounds] : spec.loading_bounds) {
    if (!spec.has_loading(key))
      diags.push_back("bound for unknown loading " + key_str(key));
    if (bounds.lower > bounds.upper)
      diags.push_back("bound for " + key_str(key) + " has lower > upper");
    auto f = spec.fixed_loadings.find(key);
    if (f != spec.fixed_loadings.end() &&
        (f->second < bounds.lower || f->second > bounds.upper))
      diags.push_back("fixed value for " + key_str(key) + " lies outside its bounds");
  }
  for (const auto& [factor, value] : spec.fixed_factor_variances)
    if (!spec.has_factor(factor))
      diags.push_back("fixvar for unknown factor " + factor);
  return diags;
}

IdentificationStrategy IdentificationStrategy::fixed_variance() {
  return IdentificationStrategy{};
}

IdentificationStrategy IdentificationStrategy::anchor(std::string factor, std::string indicator) {
  IdentificationStrategy s;
  s.kind = Kind::FixedAnchorLoading;
  s.anchor_factor = std::move(factor);
  s.anchor_indicator = std::move(indicator);
  return s;
}

StartPolicy StartPolicy::engine_default() { return StartPolicy{}; }

StartPolicy StartPolicy::uniform(double value) {
  StartPolicy p;
  p.kind = Kind::UniformLoading;
  p.uniform_value = value;
  return p;
}

StartPolicy StartPolicy::per(std::map<LoadingKey, double> starts) {
  StartPolicy p;
  p.kind = Kind::PerLoading;
  p.per_loading = std::move(starts);
  return p;
}

int ParameterLayout::indicator_index(const std::string& name) const {
  for (std::size_t i = 0; i < indicators.size(); ++i)
    if (indicators[i].name == name) return static_cast<int>(i);
  return -1;
}

int ParameterLayout::factor_index(const std::string& name) const {
  for (std::size_t i = 0; i < factor_names.size(); ++i)
    if (factor_names[i] == name) return static_cast<int>(i);
  return -1;
}

const LayoutEntry& ParameterLayout::entry(ParamRole role, const std::string& factor,
                                          const std::string& second) const {
  for (const auto& e : entries)
    if (e.role == role && e.factor == factor && (second.empty() || e.second == second))
      return e;
  throw std::invalid_argument("no layout entry for " + factor +
                              (second.empty() ? "" : "." + second));
}

Eigen::VectorXd ParameterLayout::start_vector() const {
  Eigen::VectorXd v(free_total);
  for (const auto& e : entries)
    if (e.is_free()) v[e.position] = e.start;
  return v;
}

ParameterLayout build_parameter_layout(const ModelSpec& spec,
                                       const IdentificationStrategy& strategy,
                                       const StartPolicy& policy) {
  auto diags = validate_spec(spec);
  if (!diags.empty())
    throw std::invalid_argument("invalid model spec: " + diags.front());

  const bool anchored = strategy.kind == IdentificationStrategy::Kind::FixedAnchorLoading;
  LoadingKey anchor{strategy.anchor_factor, strategy.anchor_indicator};
  if (anchored) {
    if (!spec.has_loading(anchor))
      throw std::invalid_argument("unknown anchor " + key_str(anchor));
    if (spec.fixed_factor_variances.count(anchor.first))
      throw std::invalid_argument("factor " + anchor.first +
                                  ": both identification strategies requested (anchor loading "
                                  "and fixed factor variance)");
    auto f = spec.fixed_loadings.find(anchor);
    if (f != spec.fixed_loadings.end() && f->second != 1.0)
      throw std::invalid_argument("anchor " + key_str(anchor) +
                                  " is already fixed to a value other than 1");
  }

  auto policy_start = [&](const LoadingKey& key) {
    switch (policy.kind) {
      case StartPolicy::Kind::EngineDefault:
        return 0.5;
      case StartPolicy::Kind::UniformLoading:
        return policy.uniform_value;
      case StartPolicy::Kind::PerLoading: {
        auto it = policy.per_loading.find(key);
        if (it == policy.per_loading.end())
          throw std::invalid_argument("start policy missing loading " + key_str(key));
        return it->second;
      }
    }
    return 0.5;
  };

  ParameterLayout out;
  out.factor_names = spec.factors;
  out.indicators = spec.indicators;

  for (const auto& key : spec.loading_order) {
    LayoutEntry e;
    e.role = ParamRole::Loading;
    e.factor = key.first;
    e.second = key.second;
    if (auto b = spec.loading_bounds.find(key); b != spec.loading_bounds.end()) {
      e.lower = b->second.lower;
      e.upper = b->second.upper;
    }
    if (anchored && key == anchor) {
      e.fixed = 1.0;
    } else if (auto f = spec.fixed_loadings.find(key); f != spec.fixed_loadings.end()) {
      e.fixed = f->second;
    } else {
      if (auto s = spec.loading_starts.find(key); s != spec.loading_starts.end()) {
        e.start = s->second;
        e.explicit_start = true;
      } else {
        e.start = policy_start(key);
      }
      e.start = clip_into_open_interval(e.start, e.lower, e.upper);
    }
    out.entries.push_back(e);
  }

  for (const auto& factor : spec.factors) {
    LayoutEntry e;
    e.role = ParamRole::FactorVariance;
    e.factor = factor;
    e.start = 1.0;
    if (anchored && factor == anchor.first) {
      e.lower = kVarianceFloor;  // free
    } else if (auto f = spec.fixed_factor_variances.find(factor);
               f != spec.fixed_factor_variances.end()) {
      e.fixed = f->second;
    } else {
      e.fixed = 1.0;
    }
    out.entries.push_back(e);
  }

  for (std::size_t i = 0; i < spec.factors.size(); ++i) {
    for (std::size_t j = i + 1; j < spec.factors.size(); ++j) {
      LayoutEntry e;
      e.role = ParamRole::FactorCovariance;
      e.factor = spec.factors[i];
      e.second = spec.factors[j];
      e.start = 0.0;
      LoadingKey key{spec.factors[i], spec.factors[j]};
      if (auto f = spec.fixed_factor_covariances.find(key);
          f != spec.fixed_factor_covariances.end())
        e.fixed = f->second;
      out.entries.push_back(e);
    }
  }

  for (const auto& ind : spec.indicators) {
    LayoutEntry e;
    e.role = ParamRole::ResidualVariance;
    e.second = ind.name;
    e.start = 0.5;
    e.lower = kVarianceFloor;
    if (auto f = spec.fixed_residual_variances.find(ind.name);
        f != spec.fixed_residual_variances.end())
      e.fixed = f->second;
    out.entries.push_back(e);
  }

  for (const auto& ind : spec.indicators) {
    LayoutEntry e;
    e.role = ParamRole::Intercept;
    e.second = ind.name;
    e.start = 0.0;
    if (auto f = spec.fixed_intercepts.find(ind.name); f != spec.fixed_intercepts.end())
      e.fixed = f->second;
    out.entries.push_back(e);
  }

  int position = 0;
  int covariance = 0;
  for (auto& e : out.entries) {
    if (!e.is_free()) continue;
    e.position = position++;
    if (e.role != ParamRole::Intercept) ++covariance;
  }
  out.free_total = position;
  out.free_covariance = covariance;
  return out;
}

ModelMatrices resolve_matrices(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  if (theta.size() != layout.free_covariance && theta.size() != layout.free_total)
    throw std::invalid_argument(
        "parameter vector has length " + std::to_string(theta.size()) + ", expected " +
        std::to_string(layout.free_covariance) + " or " + std::to_string(layout.free_total));

  const int p = layout.indicator_count();
  const int m = layout.factor_count();
  ModelMatrices mm;
  mm.lambda = Eigen::MatrixXd::Zero(p, m);
  mm.phi = Eigen::MatrixXd::Zero(m, m);
  mm.theta_diag = Eigen::VectorXd::Zero(p);
  mm.tau = Eigen::VectorXd::Zero(p);

  for (const auto& e : layout.entries) {
    double value;
    if (!e.is_free())
      value = *e.fixed;
    else if (e.position < theta.size())
      value = theta[e.position];
    else
      value = e.start;  // intercept beyond a covariance-only vector

    switch (e.role) {
      case ParamRole::Loading:
        mm.lambda(layout.indicator_index(e.second), layout.factor_index(e.factor)) = value;
        break;
      case ParamRole::FactorVariance:
        mm.phi(layout.factor_index(e.factor), layout.factor_index(e.factor)) = value;
        break;
      case ParamRole::FactorCovariance: {
        int a = layout.factor_index(e.factor);
        int b = layout.factor_index(e.second);
        mm.phi(a, b) = value;
        mm.phi(b, a) = value;
        break;
      }
      case ParamRole::ResidualVariance:
        if (value < 0.0 && e.lower >= 0.0)
          throw std::invalid_argument("negative residual variance for " + e.second);
        mm.theta_diag[layout.indicator_index(e.second)] = value;
        break;
      case ParamRole::Intercept:
        mm.tau[layout.indicator_index(e.second)] = value;
        break;
    }
  }
  return mm;
}

Eigen::MatrixXd implied_covariance(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  ModelMatrices mm = resolve_matrices(layout, theta);
  Eigen::MatrixXd common = mm.lambda * mm.phi * mm.lambda.transpose();
  // Exact symmetry: the two multiply orders behind (i,j) and (j,i) can round
  // differently, so average them. IEEE negation is exact, so this also keeps
  // the loading-sign-flip invariance exact element-wise.
  Eigen::MatrixXd sigma = 0.5 * (common + common.transpose());
  sigma += Eigen::MatrixXd(mm.theta_diag.asDiagonal());
  return sigma;
}

}  // namespace cfa
