#include "rjm/serialize.hpp"

#include "rjm/error.hpp"

namespace rjm {

using nlohmann::json;

json to_json(const ModelSpec& spec) {
  const PriorSettings& p = spec.priors;
  return json{
      {"regime", to_string(spec.regime)},
      {"fixed_terms", spec.fixed_terms},
      {"random_terms", spec.random_terms},
      {"survival_covariates", spec.survival_covariates},
      {"baseline_hazard", "weibull"},
      {"link", {{"current_value", spec.link.current_value}, {"slope", spec.link.slope}}},
      {"priors",
       {{"intercept_scale", p.intercept_scale},
        {"coef_scale", p.coef_scale},
        {"scale_scale", p.scale_scale},
        {"lkj_shape", p.lkj_shape},
        {"df_lower", p.df_lower},
        {"df_upper", p.df_upper},
        {"hazard_scale", p.hazard_scale}}},
      {"quadrature_panels", spec.quadrature_panels},
      {"log_scale_marker", spec.log_scale_marker},
  };
}

ModelSpec model_spec_from_json(const json& j) {
  try {
    ModelSpec s;
    s.regime = parse_regime(j.at("regime").get<std::string>());
    s.fixed_terms = j.at("fixed_terms").get<std::vector<std::string>>();
    s.random_terms = j.at("random_terms").get<std::vector<std::string>>();
    s.survival_covariates = j.at("survival_covariates").get<std::vector<std::string>>();
    if (j.value("baseline_hazard", "weibull") != "weibull") throw ValidationError("only the Weibull baseline hazard is supported");
    s.link.current_value = j.at("link").at("current_value").get<bool>();
    s.link.slope = j.at("link").at("slope").get<bool>();
    const json& p = j.at("priors");
    s.priors.intercept_scale = p.at("intercept_scale").get<double>();
    s.priors.coef_scale = p.at("coef_scale").get<double>();
    s.priors.scale_scale = p.at("scale_scale").get<double>();
    s.priors.lkj_shape = p.at("lkj_shape").get<double>();
    s.priors.df_lower = p.at("df_lower").get<double>();
    s.priors.df_upper = p.at("df_upper").get<double>();
    s.priors.hazard_scale = p.at("hazard_scale").get<double>();
    s.quadrature_panels = j.value("quadrature_panels", 1);
    s.log_scale_marker = j.value("log_scale_marker", false);
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model spec: ") + e.what());
  }
}

json to_json(const SamplerConfig& c) {
  return json{{"chains", c.chains},
              {"iterations", c.iterations},
              {"warmup", c.num_warmup()},
              {"target_accept", c.target_accept},
              {"max_depth", c.max_depth},
              {"seed", c.seed},
              {"init_radius", c.init_radius},
              {"max_divergent_fraction", c.max_divergent_fraction}};
}

SamplerConfig sampler_config_from_json(const json& j) {
  try {
    SamplerConfig c;
    c.chains = j.at("chains").get<int>();
    c.iterations = j.at("iterations").get<int>();
    c.warmup = j.at("warmup").get<int>();
    c.target_accept = j.at("target_accept").get<double>();
    c.max_depth = j.at("max_depth").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.init_radius = j.value("init_radius", 2.0);
    c.max_divergent_fraction = j.value("max_divergent_fraction", 0.25);
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("sampler config: ") + e.what());
  }
}

}  // namespace rjm
