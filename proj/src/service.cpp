#include "lang2manip/service.hpp"

#include <algorithm>
#include <cctype>

#include <httplib.h>

#include "lang2manip/errors.hpp"
#include "lang2manip/random.hpp"
#include "lang2manip/textualizer.hpp"

namespace lang2manip {

using nlohmann::json;

std::unique_ptr<LlmClient> make_client(const ClientConfig& config) {
  if (config.kind == "mock") {
    return std::make_unique<MockLlmClient>(config.error_rate, config.seed, config.mock);
  }
  if (config.kind == "http") {
    if (config.http.endpoint.empty()) {
      throw Error(Errc::invalid_request, "http client needs an endpoint", "client");
    }
    return std::make_unique<HttpLlmClient>(config.http);
  }
  throw Error(Errc::invalid_request, "unknown client kind '" + config.kind + "'", "client");
}

// ---------------------------------------------------------------------------------------------
// Tasks

TaskResult run_task(const Workspace& ws, const std::string& task, LlmClient& client,
                    const TaskOptions& options) {
  TaskResult result;
  result.task = task;
  const PromptBundle bundle = compose_prompt(task, default_system_prompt(), textualize(ws));
  const int repairs = options.require_first_plan ? 0 : options.max_repairs;
  auto plan = request_plan(client, bundle, ws, repairs, {}, &result.attempts);
  if (!plan) {
    result.plan_error = plan.error();
    return result;
  }
  result.plan = std::move(plan).value();
  if (options.ground) {
    result.execution =
        execute_plan(ws, *result.plan, client, options.max_repairs, options.seed, options.grounding);
  }
  return result;
}

json TaskResult::to_json(double dt) const {
  json j = {{"task", task}, {"attempts", attempts}};
  j["plan"] = plan ? json::parse(serialize_plan(*plan)) : json(nullptr);
  j["plan_error"] = plan_error ? json::parse(plan_error->to_json()) : json(nullptr);
  j["execution"] = execution ? execution_document(*execution, dt) : json(nullptr);
  return j;
}

namespace {

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

const Obstacle* find_named(const Workspace& ws, const std::string& name) {
  for (const Obstacle& o : ws.obstacles) {
    if (lower(o.name) == lower(name)) return &o;
  }
  return nullptr;
}

}  // namespace

bool put_task_satisfied(const Workspace& ws, const std::string& task) {
  const auto put = parse_put_task(task);
  if (!put) return false;
  const Obstacle* target = find_named(ws, put->target);
  if (!target || target->attached) return false;
  const Aabb base = bounding_box(target->shape, target->pose);
  for (const std::string& name : put->objects) {
    const Obstacle* o = find_named(ws, name);
    if (!o || o->attached) return false;
    const Aabb box = bounding_box(o->shape, o->pose);
    const Vec3 c = box.center();
    if (c.x() < base.min.x() || c.x() > base.max.x() || c.y() < base.min.y() ||
        c.y() > base.max.y() || box.min.z() < base.min.z()) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------------------------
// Metrics

Workspace jitter_objects(const Workspace& ws, double jitter, std::uint64_t seed) {
  Workspace out = ws;
  if (!(jitter > 0.0)) return out;
  Rng rng(seed);
  for (std::size_t i = 0; i < out.obstacles.size(); ++i) {
    if (!out.obstacles[i].graspable || out.obstacles[i].attached) continue;
    const Pose original = out.obstacles[i].pose;
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      Pose candidate = original;
      candidate.position.x() += rng.uniform(-jitter, jitter);
      candidate.position.y() += rng.uniform(-jitter, jitter);
      out.obstacles[i].pose = candidate;
      const PosedShape shape{out.obstacles[i].shape, candidate};
      const Aabb box = bounding_box(shape.shape, shape.pose);
      bool free = (box.min.array() > out.bounds.min.array()).all() &&
                  (box.max.array() < out.bounds.max.array()).all();
      for (std::size_t j = 0; free && j < out.obstacles.size(); ++j) {
        const Obstacle& other = out.obstacles[j];
        if (j == i || other.attached) continue;
        free = !shapes_collide(shape, {other.shape, other.pose}).colliding;
      }
      if (free) free = !check_config(out, out.current_config).in_collision;
      placed = free;
    }
    if (!placed) out.obstacles[i].pose = original;
  }
  return out;
}

MetricsReport run_metrics(const Workspace& ws, const MetricsConfig& config) {
  if (config.trials < 1) throw Error(Errc::invalid_value, "trials must be >= 1", "metrics");
  if (!(config.error_rate >= 0.0 && config.error_rate <= 1.0)) {
    throw Error(Errc::invalid_value, "error_rate must lie in [0, 1]", "metrics");
  }
  MetricsReport report;
  report.config = config;
  int successes = 0, valid = 0, issued = 0, solved = 0;
  for (int t = 0; t < config.trials; ++t) {
    TrialRecord record;
    record.trial = t;
    record.seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
    const Workspace trial_ws = jitter_objects(ws, config.jitter, derive_seed(record.seed, 1));
    MockLlmClient client(config.error_rate, derive_seed(record.seed, 2), config.mock);
    TaskOptions options;
    options.max_repairs = config.max_repairs;
    options.seed = derive_seed(record.seed, 3);
    options.ground = config.ground;
    options.grounding = config.grounding;
    options.require_first_plan = true;
    const TaskResult result = run_task(trial_ws, config.task, client, options);
    record.symbolic_valid = result.first_plan_valid();
    if (!record.symbolic_valid) {
      record.failure = "symbolic:" + std::string(to_string(result.plan_error->kind));
    } else if (!result.execution) {
      record.failure = "not_grounded";
    } else {
      const ExecutionReport& ex = *result.execution;
      record.ik_succeeded = std::none_of(ex.outcomes.begin(), ex.outcomes.end(), [](const auto& o) {
        return o.status == OutcomeStatus::ik_failed;
      });
      record.plans_succeeded = ex.success;
      record.queries_issued = ex.queries_issued;
      record.queries_solved = ex.queries_solved;
      record.task_success = ex.success && put_task_satisfied(ex.final_workspace, config.task);
      if (record.task_success) {
        record.failure = "none";
      } else if (!ex.success) {
        const ActionOutcome& last = ex.outcomes.back();
        record.failure = last.ok() && ex.plan_error
                             ? "symbolic:" + std::string(to_string(ex.plan_error->kind))
                             : "grounding:" + std::string(to_string(last.status));
      } else {
        record.failure = "goal_unmet";
      }
    }
    successes += record.task_success;
    valid += record.symbolic_valid;
    issued += record.queries_issued;
    solved += record.queries_solved;
    report.trials.push_back(record);
  }
  const double n = config.trials;
  report.task_success_rate = successes / n;
  report.symbolic_accuracy = valid / n;
  if (issued > 0) report.motion_feasibility = static_cast<double>(solved) / issued;
  return report;
}

json MetricsReport::to_json() const {
  json trials_json = json::array();
  int successes = 0, valid = 0, issued = 0, solved = 0;
  for (const TrialRecord& r : trials) {
    trials_json.push_back({{"trial", r.trial},
                           {"seed", r.seed},
                           {"symbolic_valid", r.symbolic_valid},
                           {"ik_succeeded", r.ik_succeeded},
                           {"plans_succeeded", r.plans_succeeded},
                           {"task_success", r.task_success},
                           {"failure", r.failure},
                           {"queries_issued", r.queries_issued},
                           {"queries_solved", r.queries_solved}});
    successes += r.task_success;
    valid += r.symbolic_valid;
    issued += r.queries_issued;
    solved += r.queries_solved;
  }
  return {{"config",
           {{"trials", config.trials},
            {"seed", config.seed},
            {"error_rate", config.error_rate},
            {"jitter", config.jitter},
            {"task", config.task},
            {"ground", config.ground},
            {"max_repairs", config.max_repairs}}},
          {"summary",
           {{"trials", trials.size()},
            {"task_successes", successes},
            {"symbolic_valid", valid},
            {"queries_issued", issued},
            {"queries_solved", solved},
            {"task_success_rate", task_success_rate},
            {"motion_feasibility", motion_feasibility ? json(*motion_feasibility) : json(nullptr)},
            {"symbolic_accuracy", symbolic_accuracy},
            {"symbolic_error_rate", 1.0 - symbolic_accuracy}}},
          {"trials", trials_json}};
}

// ---------------------------------------------------------------------------------------------
// Service

namespace {

using Response = Service::Response;

Response error_response(int status, std::string_view code, const std::string& message,
                        json detail = nullptr) {
  return {status, {{"code", std::string(code)}, {"message", message}, {"detail", detail}}};
}

int status_for(Errc code) {
  switch (code) {
    case Errc::unknown_session: return 404;
    case Errc::planner_not_set:
    case Errc::query_not_set:
    case Errc::no_path: return 409;
    case Errc::transport: return 502;
    default: return 400;
  }
}

template <class F>
Response guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string what = e.what();
    const std::string prefix = e.where().empty() ? "" : e.where() + ": ";
    return error_response(status_for(e.code()), to_string(e.code()),
                          what.substr(what.rfind(prefix, 0) == 0 ? prefix.size() : 0),
                          e.where().empty() ? json(nullptr) : json{{"where", e.where()}});
  } catch (const TransportError& e) {
    return error_response(502, "transport", e.what());
  } catch (const json::exception& e) {
    return error_response(400, "invalid_request", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

std::string param_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number()) return v.dump();
  throw Error(Errc::invalid_parameter, "parameter values must be scalars", "params");
}

std::vector<double> number_list(const json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_array()) {
    throw Error(Errc::invalid_request, std::string("'") + key + "' must be an array of numbers", key);
  }
  std::vector<double> out;
  for (const json& v : body[key]) {
    if (!v.is_number()) {
      throw Error(Errc::invalid_request, std::string("'") + key + "' must contain numbers", key);
    }
    out.push_back(v.get<double>());
  }
  return out;
}

ClientConfig client_from_json(const json& j, ClientConfig base) {
  if (j.is_null()) return base;
  if (!j.is_object()) throw Error(Errc::invalid_request, "'client' must be an object", "client");
  if (j.contains("kind")) base.kind = j.at("kind").get<std::string>();
  if (j.contains("error_rate")) base.error_rate = j.at("error_rate").get<double>();
  if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("endpoint")) base.http.endpoint = j.at("endpoint").get<std::string>();
  if (j.contains("model")) base.http.model = j.at("model").get<std::string>();
  if (j.contains("key_env")) base.http.key_env = j.at("key_env").get<std::string>();
  if (j.contains("timeout")) base.http.timeout_seconds = j.at("timeout").get<int>();
  return base;
}

json stats_json(const PlannerStats& s) {
  return {{"iterations", s.iterations},
          {"start_tree_size", s.start_tree_size},
          {"goal_tree_size", s.goal_tree_size}};
}

Workspace load_from_body(const json& body) {
  if (body.contains("problem_path")) {
    return load_problem_path(body.at("problem_path").get<std::string>());
  }
  if (body.contains("problem_xml")) {
    if (!body.contains("root")) {
      throw Error(Errc::invalid_request, "inline problems need a 'root' directory for models");
    }
    return parse_problem_file(body.at("problem_xml").get<std::string>(),
                              filesystem_resolver(body.at("root").get<std::string>()));
  }
  throw Error(Errc::invalid_request, "body needs 'problem_path' or 'problem_xml'");
}

}  // namespace

Service::Service() : Service(Options{}) {}
Service::Service(Options options) : options_(std::move(options)) {}

std::shared_ptr<Service::Session> Service::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(Errc::unknown_session, "no session '" + id + "'");
  return it->second;
}

Response Service::create_session(const json& body) {
  return guarded([&]() -> Response {
    auto session = std::make_shared<Session>();
    session->workspace = load_from_body(body);
    std::string id;
    {
      std::lock_guard lock(sessions_mutex_);
      id = std::to_string(next_id_++);
      sessions_[id] = session;
    }
    const Workspace& ws = session->workspace;
    json controlled = json::array();
    for (std::size_t d : ws.controlled) controlled.push_back(ws.robot.movable_joint(d).name);
    return {201,
            {{"session", id}, {"name", ws.name}, {"dof", ws.robot.dof()},
             {"controlled", controlled}, {"warnings", ws.warnings}}};
  });
}

Response Service::set_planner(const std::string& id, const json& body) {
  return guarded([&]() -> Response {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!body.contains("algorithm") || !body["algorithm"].is_string()) {
      throw Error(Errc::invalid_request, "'algorithm' must be a string", "algorithm");
    }
    std::map<std::string, std::string> params;
    if (body.contains("params")) {
      if (!body["params"].is_object()) {
        throw Error(Errc::invalid_request, "'params' must be an object", "params");
      }
      for (const auto& [key, value] : body["params"].items()) params[key] = param_string(value);
    }
    PlannerSpec spec = PlannerSpec::from_strings(body["algorithm"].get<std::string>(), params);
    s->planner = spec;
    s->path.reset();
    json echo = json::object();
    for (const auto& [key, value] : spec.param_strings()) echo[key] = value;
    return {200, {{"ok", true}, {"algorithm", std::string(to_string(spec.algorithm))}, {"params", echo}}};
  });
}

Response Service::set_query(const std::string& id, const json& body) {
  return guarded([&]() -> Response {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const Workspace& ws = s->workspace;
    const std::vector<double> init = number_list(body, "init");
    const std::vector<double> goal = number_list(body, "goal");
    for (const auto& [label, values] : {std::pair{"init", &init}, std::pair{"goal", &goal}}) {
      if (values->size() != ws.controlled.size()) {
        return error_response(400, to_string(Errc::arity_mismatch),
                              std::string(label) + " has " + std::to_string(values->size()) +
                                  " values for " + std::to_string(ws.controlled.size()) +
                                  " controlled joints",
                              {{"which", label}, {"expected", ws.controlled.size()}});
      }
    }
    PlanningQuery query{ws.expand_controlled(init, ws.current_config),
                        ws.expand_controlled(goal, ws.current_config)};
    for (const auto& [label, q] : {std::pair{"init", &query.start}, std::pair{"goal", &query.goal}}) {
      for (std::size_t d = 0; d < ws.robot.dof(); ++d) {
        const Joint& joint = ws.robot.movable_joint(d);
        if ((*q)[d] < joint.limits.lower || (*q)[d] > joint.limits.upper) {
          return error_response(
              400, to_string(Errc::limits_violated),
              std::string(label) + " violates the limits of joint '" + joint.name + "'",
              {{"which", label}, {"joint", joint.name}, {"value", (*q)[d]},
               {"lower", joint.limits.lower}, {"upper", joint.limits.upper}});
        }
      }
      const CollisionReport report = check_config(ws, *q);
      if (report.in_collision) {
        return error_response(
            400, to_string(Errc::in_collision),
            std::string(label) + " is in collision: " + report.witness->first + " / " +
                report.witness->second,
            {{"which", label}, {"witness", {report.witness->first, report.witness->second}}});
      }
    }
    s->query = query;
    s->path.reset();
    return {200, {{"ok", true}}};
  });
}

Response Service::solve(const std::string& id) {
  return guarded([&]() -> Response {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!s->planner) throw Error(Errc::planner_not_set, "planner not set; call setPlanner first");
    if (!s->query) throw Error(Errc::query_not_set, "query not set; call setQuery first");
    s->path.reset();
    auto result = plan(s->workspace, *s->planner, *s->query);
    if (!result) {
      json body = {{"solved", false},
                   {"reason", std::string(to_string(result.error().reason))},
                   {"message", result.error().message},
                   {"stats", stats_json(result.error().stats)}};
      if (result.error().witness) {
        body["witness"] = {result.error().witness->first, result.error().witness->second};
      }
      return {200, body};
    }
    s->path = result.value();
    return {200,
            {{"solved", true},
             {"waypoints", result.value().waypoints.size()},
             {"stats", stats_json(result.value().stats)}}};
  });
}

Response Service::get_path(const std::string& id) {
  return guarded([&]() -> Response {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!s->path) throw Error(Errc::no_path, "no path available; solve first");
    json doc = trajectory_document(s->workspace, *s->path, options_.export_dt);
    doc["algorithm"] = std::string(to_string(s->planner->algorithm));
    return {200, doc};
  });
}

Response Service::state_text(const std::string& id) {
  return guarded([&]() -> Response {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return {200, {{"text", textualize(s->workspace).rendered}}};
  });
}

Response Service::run_task(const std::string& id, const json& body) {
  return guarded([&]() -> Response {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    if (!body.contains("task") || !body["task"].is_string()) {
      throw Error(Errc::invalid_request, "'task' must be a string", "task");
    }
    TaskOptions options = options_.task;
    if (body.contains("max_repairs")) options.max_repairs = body["max_repairs"].get<int>();
    if (body.contains("seed")) options.seed = body["seed"].get<std::uint64_t>();
    if (body.contains("ground")) options.ground = body["ground"].get<bool>();
    const ClientConfig client_config =
        client_from_json(body.value("client", json(nullptr)), options_.client);
    auto client = make_client(client_config);
    TaskResult result =
        lang2manip::run_task(s->workspace, body["task"].get<std::string>(), *client, options);
    if (result.plan_error && !result.plan) {
      return error_response(422, "plan_error", result.plan_error->message,
                            json::parse(result.plan_error->to_json()));
    }
    if (result.execution) s->workspace = result.execution->final_workspace;
    return {200, result.to_json(options_.export_dt)};
  });
}

Response Service::metrics(const json& body) {
  return guarded([&]() -> Response {
    Workspace ws;
    if (body.contains("session")) {
      auto s = find(body["session"].get<std::string>());
      std::lock_guard lock(s->mutex);
      ws = s->workspace;
    } else {
      ws = load_from_body(body);
    }
    MetricsConfig config;
    config.trials = body.value("trials", config.trials);
    config.seed = body.value("seed", config.seed);
    config.error_rate = body.value("error_rate", config.error_rate);
    config.jitter = body.value("jitter", config.jitter);
    config.task = body.value("task", config.task);
    config.ground = body.value("ground", config.ground);
    config.max_repairs = body.value("max_repairs", config.max_repairs);
    config.grounding = options_.task.grounding;
    return {200, run_metrics(ws, config).to_json()};
  });
}

void Service::mount(httplib::Server& server) {
  auto send = [](httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body.dump(2), "application/json");
  };
  auto parse = [](const httplib::Request& req) {
    return req.body.empty() ? json::object() : json::parse(req.body);
  };
  auto with_body = [send, parse](auto handler) {
    return [send, parse, handler](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = parse(req);
      } catch (const json::exception& e) {
        send(res, error_response(400, "invalid_request", std::string("body is not JSON: ") + e.what()));
        return;
      }
      send(res, handler(req, body));
    };
  };
  server.Post("/session", with_body([this](const httplib::Request&, const json& body) {
                return create_session(body);
              }));
  server.Post(R"(/session/([^/]+)/planner)",
              with_body([this](const httplib::Request& req, const json& body) {
                return set_planner(req.matches[1], body);
              }));
  server.Post(R"(/session/([^/]+)/query)",
              with_body([this](const httplib::Request& req, const json& body) {
                return set_query(req.matches[1], body);
              }));
  server.Post(R"(/session/([^/]+)/solve)",
              with_body([this](const httplib::Request& req, const json&) {
                return solve(req.matches[1]);
              }));
  server.Get(R"(/session/([^/]+)/path)", [this, send](const httplib::Request& req,
                                                      httplib::Response& res) {
    send(res, get_path(req.matches[1]));
  });
  server.Get(R"(/session/([^/]+)/state/text)", [this, send](const httplib::Request& req,
                                                            httplib::Response& res) {
    send(res, state_text(req.matches[1]));
  });
  server.Post(R"(/session/([^/]+)/task)",
              with_body([this](const httplib::Request& req, const json& body) {
                return run_task(req.matches[1], body);
              }));
  server.Post("/metrics", with_body([this](const httplib::Request&, const json& body) {
                return metrics(body);
              }));
}

}  // namespace lang2manip
