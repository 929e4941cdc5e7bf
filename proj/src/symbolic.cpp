#include "lang2manip/symbolic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "lang2manip/errors.hpp"
#include "lang2manip/random.hpp"

namespace lang2manip {

namespace detail {
extern const char kSystemPrompt[];
}

using nlohmann::json;

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::pick: return "pick";
    case ActionKind::place: return "place";
    case ActionKind::move: return "move";
    case ActionKind::push: return "push";
  }
  return "pick";
}

std::string_view to_string(Approach approach) {
  switch (approach) {
    case Approach::top: return "top";
    case Approach::side_x_pos: return "side_x+";
    case Approach::side_x_neg: return "side_x-";
    case Approach::side_y_pos: return "side_y+";
    case Approach::side_y_neg: return "side_y-";
  }
  return "top";
}

std::optional<ActionKind> parse_action_kind(std::string_view text) {
  for (ActionKind k : {ActionKind::pick, ActionKind::place, ActionKind::move, ActionKind::push}) {
    if (text == to_string(k)) return k;
  }
  return std::nullopt;
}

std::optional<Approach> parse_approach(std::string_view text) {
  for (Approach a : {Approach::top, Approach::side_x_pos, Approach::side_x_neg, Approach::side_y_pos,
                     Approach::side_y_neg}) {
    if (text == to_string(a)) return a;
  }
  return std::nullopt;
}

std::string_view to_string(PlanErrorKind kind) {
  switch (kind) {
    case PlanErrorKind::malformed_json: return "malformed_json";
    case PlanErrorKind::missing_argument: return "missing_argument";
    case PlanErrorKind::unknown_object: return "unknown_object";
    case PlanErrorKind::unknown_action: return "unknown_action";
    case PlanErrorKind::unknown_planner: return "unknown_planner";
    case PlanErrorKind::inconsistent_order: return "inconsistent_order";
    case PlanErrorKind::refusal: return "refusal";
  }
  return "malformed_json";
}

std::string PlanError::to_json() const {
  json j = {{"error", std::string(to_string(kind))}, {"message", message}};
  if (action_index >= 0) j["action_index"] = action_index;
  else j["action_index"] = nullptr;
  return j.dump();
}

std::string_view to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::drop_argument: return "drop_argument";
    case FaultKind::swap_order: return "swap_order";
    case FaultKind::misspell_object: return "misspell_object";
    case FaultKind::broken_json: return "broken_json";
  }
  return "broken_json";
}

// ---------------------------------------------------------------------------------------------
// Plan parsing

namespace {

PlanError fail(PlanErrorKind kind, long index, std::string message) {
  return PlanError{kind, index, std::move(message)};
}

std::optional<std::vector<double>> number_array(const json& j, std::size_t n) {
  if (!j.is_array() || j.size() != n) return std::nullopt;
  std::vector<double> out;
  for (const json& v : j) {
    if (!v.is_number()) return std::nullopt;
    const double d = v.get<double>();
    if (!std::isfinite(d)) return std::nullopt;
    out.push_back(d);
  }
  return out;
}

const std::vector<std::string>& allowed_keys(ActionKind kind) {
  static const std::vector<std::string> pick = {"action", "object", "approach", "planner"};
  static const std::vector<std::string> place = {"action", "object", "target_pose", "planner"};
  static const std::vector<std::string> move = {"action", "waypoint", "planner"};
  static const std::vector<std::string> push = {"action", "object", "direction", "distance",
                                                "planner"};
  switch (kind) {
    case ActionKind::pick: return pick;
    case ActionKind::place: return place;
    case ActionKind::move: return move;
    case ActionKind::push: return push;
  }
  return pick;
}

const std::vector<std::string>& schema_keys() {
  static const std::vector<std::string> keys = {"action",    "object",    "target_pose",
                                                "waypoint",  "approach",  "direction",
                                                "distance",  "planner"};
  return keys;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

Result<SymbolicAction, PlanError> parse_action(const json& j, long index) {
  if (!j.is_object()) return fail(PlanErrorKind::malformed_json, index, "action is not an object");
  for (const auto& [key, value] : j.items()) {
    if (!contains(schema_keys(), key)) {
      return fail(PlanErrorKind::malformed_json, index, "unknown field '" + key + "'");
    }
  }
  if (!j.contains("action")) return fail(PlanErrorKind::missing_argument, index, "missing 'action'");
  if (!j["action"].is_string()) {
    return fail(PlanErrorKind::missing_argument, index, "'action' must be a string");
  }
  const std::string name = j["action"].get<std::string>();
  const auto kind = parse_action_kind(name);
  if (!kind) return fail(PlanErrorKind::unknown_action, index, "unknown action '" + name + "'");
  SymbolicAction a;
  a.kind = *kind;
  for (const auto& [key, value] : j.items()) {
    if (!contains(allowed_keys(a.kind), key)) {
      return fail(PlanErrorKind::malformed_json, index,
                  "field '" + key + "' is not used by '" + name + "'");
    }
  }
  auto bad = [&](const std::string& what) {
    return fail(PlanErrorKind::missing_argument, index, what);
  };

  if (j.contains("planner")) {
    if (!j["planner"].is_string()) return bad("'planner' must be a string");
    const std::string planner = j["planner"].get<std::string>();
    a.planner = parse_planner_algorithm(planner);
    if (!a.planner) {
      return fail(PlanErrorKind::unknown_planner, index, "unknown planner '" + planner + "'");
    }
  }
  if (j.contains("object")) {
    if (!j["object"].is_string() || j["object"].get<std::string>().empty()) {
      return bad("'object' must be a nonempty string");
    }
    a.object = j["object"].get<std::string>();
  }
  if (j.contains("approach")) {
    if (!j["approach"].is_string()) return bad("'approach' must be a string");
    a.approach = parse_approach(j["approach"].get<std::string>());
    if (!a.approach) return bad("invalid approach '" + j["approach"].get<std::string>() + "'");
  }
  if (j.contains("target_pose")) {
    const auto v = number_array(j["target_pose"], 7);
    if (!v) return bad("'target_pose' must be [x, y, z, qx, qy, qz, qw]");
    const Quat q((*v)[6], (*v)[3], (*v)[4], (*v)[5]);
    if (q.norm() < 1e-6) return bad("'target_pose' quaternion is degenerate");
    a.target_pose = Pose{Vec3((*v)[0], (*v)[1], (*v)[2]), std::abs(q.norm() - 1.0) < 1e-12 ? q : q.normalized()};
  }
  if (j.contains("waypoint")) {
    const auto v = number_array(j["waypoint"], 3);
    if (!v) return bad("'waypoint' must be [x, y, z]");
    a.waypoint = Vec3((*v)[0], (*v)[1], (*v)[2]);
  }
  if (j.contains("direction")) {
    const auto v = number_array(j["direction"], 3);
    if (!v) return bad("'direction' must be [dx, dy, dz]");
    const Vec3 d((*v)[0], (*v)[1], (*v)[2]);
    if (d.norm() < 1e-9) return bad("'direction' is zero");
    // Leave unit input alone so a serialized plan reparses bit for bit.
    a.direction = std::abs(d.norm() - 1.0) < 1e-12 ? d : d.normalized();
  }
  if (j.contains("distance")) {
    if (!j["distance"].is_number() || !(j["distance"].get<double>() > 0.0) ||
        !std::isfinite(j["distance"].get<double>())) {
      return bad("'distance' must be a positive number");
    }
    a.distance = j["distance"].get<double>();
  }

  switch (a.kind) {
    case ActionKind::pick:
      if (!a.object) return bad("pick requires 'object'");
      break;
    case ActionKind::place:
      if (!a.object) return bad("place requires 'object'");
      if (!a.target_pose) return bad("place requires 'target_pose'");
      break;
    case ActionKind::move:
      if (!a.waypoint) return bad("move requires 'waypoint'");
      break;
    case ActionKind::push:
      if (!a.object) return bad("push requires 'object'");
      if (!a.direction) return bad("push requires 'direction'");
      if (!a.distance) return bad("push requires 'distance'");
      break;
  }
  return a;
}

}  // namespace

Result<Plan, PlanError> parse_plan(std::string_view response, const Workspace& ws) {
  json doc;
  try {
    doc = json::parse(response.begin(), response.end());
  } catch (const json::exception& e) {
    return fail(PlanErrorKind::malformed_json, -1, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) return fail(PlanErrorKind::malformed_json, -1, "plan is not an object");
  if (doc.contains("refusal")) {
    return fail(PlanErrorKind::refusal, -1,
                doc["refusal"].is_string() ? doc["refusal"].get<std::string>() : "refused");
  }
  for (const auto& [key, value] : doc.items()) {
    if (key != "task" && key != "actions") {
      return fail(PlanErrorKind::malformed_json, -1, "unknown field '" + key + "'");
    }
  }
  if (!doc.contains("task") || !doc["task"].is_string()) {
    return fail(PlanErrorKind::malformed_json, -1, "'task' must be a string");
  }
  if (!doc.contains("actions") || !doc["actions"].is_array()) {
    return fail(PlanErrorKind::malformed_json, -1, "'actions' must be an array");
  }
  if (doc["actions"].empty()) return fail(PlanErrorKind::malformed_json, -1, "no actions");

  Plan plan;
  plan.task = doc["task"].get<std::string>();
  plan.raw = std::string(response);
  const Obstacle* held_now = ws.attached_obstacle();
  std::optional<std::string> held;
  if (held_now) held = held_now->name;

  long index = 0;
  for (const json& item : doc["actions"]) {
    auto parsed = parse_action(item, index);
    if (!parsed) return parsed.error();
    SymbolicAction a = std::move(parsed).value();
    if (a.object && !ws.find_obstacle(*a.object)) {
      return fail(PlanErrorKind::unknown_object, index, "no object named '" + *a.object + "'");
    }
    switch (a.kind) {
      case ActionKind::pick:
        if (held && *held == *a.object) {
          return fail(PlanErrorKind::inconsistent_order, index, "'" + *a.object + "' is already held");
        }
        if (held) {
          return fail(PlanErrorKind::inconsistent_order, index,
                      "cannot pick '" + *a.object + "' while holding '" + *held + "'");
        }
        held = a.object;
        break;
      case ActionKind::place:
        if (!held || *held != *a.object) {
          return fail(PlanErrorKind::inconsistent_order, index,
                      "place of '" + *a.object + "' without a preceding pick");
        }
        held.reset();
        break;
      case ActionKind::push:
        if (held && *held == *a.object) {
          return fail(PlanErrorKind::inconsistent_order, index,
                      "cannot push '" + *a.object + "' while holding it");
        }
        break;
      case ActionKind::move: break;
    }
    plan.actions.push_back(std::move(a));
    ++index;
  }
  return plan;
}

std::string serialize_plan(const Plan& plan) {
  json actions = json::array();
  for (const SymbolicAction& a : plan.actions) {
    json j;
    j["action"] = std::string(to_string(a.kind));
    if (a.object) j["object"] = *a.object;
    if (a.target_pose) {
      const Pose& p = *a.target_pose;
      j["target_pose"] = {p.position.x(),    p.position.y(),    p.position.z(),
                          p.orientation.x(), p.orientation.y(), p.orientation.z(),
                          p.orientation.w()};
    }
    if (a.waypoint) j["waypoint"] = {a.waypoint->x(), a.waypoint->y(), a.waypoint->z()};
    if (a.approach) j["approach"] = std::string(to_string(*a.approach));
    if (a.direction) j["direction"] = {a.direction->x(), a.direction->y(), a.direction->z()};
    if (a.distance) j["distance"] = *a.distance;
    if (a.planner) j["planner"] = std::string(to_string(*a.planner));
    actions.push_back(std::move(j));
  }
  return json{{"task", plan.task}, {"actions", std::move(actions)}}.dump();
}

// ---------------------------------------------------------------------------------------------
// Prompts

std::string_view default_system_prompt() { return detail::kSystemPrompt; }

namespace {

constexpr std::string_view kStateMarker = "### ENVIRONMENT STATE\n";
constexpr std::string_view kTaskMarker = "### TASK\n";
constexpr std::string_view kRepairMarker = "### REPAIR\n";

std::string with_newline(std::string_view s) {
  std::string out(s);
  if (out.empty() || out.back() != '\n') out += '\n';
  return out;
}

std::string trimmed(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string PromptBundle::render(std::string_view repair) const {
  std::string out = with_newline(system);
  out += "\n";
  out += kStateMarker;
  out += with_newline(state);
  out += "\n";
  out += kTaskMarker;
  out += with_newline(task);
  if (!repair.empty()) {
    out += "\n";
    out += kRepairMarker;
    out += with_newline(repair);
  }
  return out;
}

PromptBundle compose_prompt(std::string_view task, std::string_view system_template,
                            const StateText& state) {
  const std::string t = trimmed(task);
  if (t.empty()) throw Error(Errc::invalid_request, "task is empty", "compose_prompt");
  if (trimmed(system_template).empty()) {
    throw Error(Errc::invalid_request, "system prompt is empty", "compose_prompt");
  }
  if (state.rendered.empty()) throw Error(Errc::invalid_request, "state is empty", "compose_prompt");
  return PromptBundle{t, std::string(system_template), state.rendered};
}

PromptSections split_prompt(std::string_view prompt) {
  PromptSections out;
  const auto s = prompt.find(kStateMarker);
  const auto t = prompt.find(kTaskMarker, s == std::string_view::npos ? 0 : s);
  const auto r = prompt.find(kRepairMarker, t == std::string_view::npos ? 0 : t);
  if (s != std::string_view::npos) {
    const auto begin = s + kStateMarker.size();
    out.state = std::string(prompt.substr(begin, (t == std::string_view::npos ? prompt.size() : t) - begin));
    // Drop the blank separator line that render() puts before the next marker.
    if (t != std::string_view::npos && out.state.ends_with("\n\n")) out.state.pop_back();
  }
  if (t != std::string_view::npos) {
    const auto begin = t + kTaskMarker.size();
    out.task = trimmed(prompt.substr(begin, (r == std::string_view::npos ? prompt.size() : r) - begin));
  } else {
    out.task = trimmed(prompt);
  }
  if (r != std::string_view::npos) out.repair = trimmed(prompt.substr(r + kRepairMarker.size()));
  return out;
}

// ---------------------------------------------------------------------------------------------
// Mock model

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string strip_article(std::string s) {
  s = trimmed(s);
  if (lower(s.substr(0, 4)) == "the ") s = trimmed(s.substr(4));
  return s;
}

std::vector<std::string> split_objects(const std::string& list) {
  static const std::regex separator(R"(\s*,\s*(?:and\s+)?|\s+and\s+)", std::regex::icase);
  std::vector<std::string> out;
  for (std::sregex_token_iterator it(list.begin(), list.end(), separator, -1), end; it != end;
       ++it) {
    std::string name = strip_article(it->str());
    if (!name.empty()) out.push_back(name);
  }
  return out;
}

const StateEntry* lookup(const ParsedState& state, const std::string& name) {
  const std::string key = lower(name);
  for (const StateEntry& e : state.obstacles) {
    if (lower(e.name) == key) return &e;
  }
  return nullptr;
}

double round4(double v) {
  const double r = std::round(v * 1e4) / 1e4;
  return r == 0.0 ? 0.0 : r;
}

std::string refusal(const std::string& reason) { return json{{"refusal", reason}}.dump(); }

std::string misspell(const std::string& name, const ParsedState& state, Rng& rng) {
  for (std::size_t attempt = 0; attempt < name.size() + 1; ++attempt) {
    const std::size_t at = (rng.index(name.size()) + attempt) % name.size();
    std::string candidate = name;
    candidate.insert(at, 1, name[at]);
    if (!lookup(state, candidate)) return candidate;
  }
  return name + "_x";
}

}  // namespace

std::optional<PutTask> parse_put_task(std::string_view task) {
  static const std::regex pattern(
      R"(^\s*put\s+(.+?)\s+(?:in|on|into|onto)\s+(?:the\s+)?([A-Za-z0-9_\-]+)\s*\.?\s*$)",
      std::regex::icase);
  const std::string text(task);
  std::smatch match;
  if (!std::regex_match(text, match, pattern)) return std::nullopt;
  PutTask out{split_objects(match[1].str()), match[2].str()};
  if (out.objects.empty()) return std::nullopt;
  return out;
}

std::string mock_llm_plan(std::string_view task, std::string_view state_text, double error_rate,
                          std::uint64_t seed, const MockOptions& options,
                          std::optional<FaultKind>* injected) {
  if (!(error_rate >= 0.0 && error_rate <= 1.0)) {
    throw Error(Errc::invalid_value, "error_rate must lie in [0, 1]", "mock_llm_plan");
  }
  if (injected) injected->reset();
  const auto put = parse_put_task(task);
  if (!put) return refusal("task is not of the form 'put the X in the Z'");
  const std::string task_text(task);
  const ParsedState state = parse_state_text(state_text);
  const StateEntry* target = lookup(state, put->target);
  if (!target) return refusal("no object named '" + put->target + "'");

  std::vector<const StateEntry*> held_first, rest;
  for (const std::string& name : put->objects) {
    const StateEntry* e = lookup(state, name);
    if (!e) return refusal("no object named '" + name + "'");
    (e->held ? held_first : rest).push_back(e);
  }
  held_first.insert(held_first.end(), rest.begin(), rest.end());

  const double top = target->position.z() + 0.5 * target->bbox.z();
  json actions = json::array();
  for (std::size_t i = 0; i < held_first.size(); ++i) {
    const StateEntry& x = *held_first[i];
    if (!x.held && (state.related("on", x.name, target->name) ||
                    state.related("inside", x.name, target->name))) {
      continue;
    }
    if (!x.held) {
      actions.push_back({{"action", "pick"}, {"object", x.name}, {"approach", "top"},
                         {"planner", "RRTConnect"}});
    }
    const double z = top + 0.5 * x.bbox.z() + options.place_clearance +
                     static_cast<double>(i) * options.stack_height;
    const Quat& q = x.orientation;
    actions.push_back({{"action", "place"},
                       {"object", x.name},
                       {"target_pose",
                        {round4(target->position.x()), round4(target->position.y()), round4(z),
                         round4(q.x()), round4(q.y()), round4(q.z()), round4(q.w())}},
                       {"planner", "RRTConnect"}});
  }
  if (actions.empty()) return refusal("every object is already in place");

  Rng rng(seed);
  if (!rng.bernoulli(error_rate)) {
    return json{{"task", task_text}, {"actions", actions}}.dump();
  }
  const auto fault = static_cast<FaultKind>(rng.index(4));
  if (injected) *injected = fault;
  const std::size_t n = actions.size();
  switch (fault) {
    case FaultKind::drop_argument: {
      json& a = actions[rng.index(n)];
      std::vector<std::string> required = {"object"};
      if (a["action"] == "place") required.push_back("target_pose");
      a.erase(required[rng.index(required.size())]);
      break;
    }
    case FaultKind::swap_order: {
      std::optional<std::size_t> pick;
      for (std::size_t k = 0; k + 1 < n && !pick; ++k) {
        if (actions[k]["action"] == "pick" && actions[k + 1]["action"] == "place") pick = k;
      }
      if (pick) {
        std::swap(actions[*pick], actions[*pick + 1]);
      } else {
        // Only a held object remains: picking it again is the ordering fault.
        json again = {{"action", "pick"}, {"object", actions[0]["object"]}, {"approach", "top"}};
        actions.insert(actions.begin(), again);
      }
      break;
    }
    case FaultKind::misspell_object: {
      json& a = actions[rng.index(n)];
      a["object"] = misspell(a["object"].get<std::string>(), state, rng);
      break;
    }
    case FaultKind::broken_json: {
      const std::string text = json{{"task", task_text}, {"actions", actions}}.dump();
      return text.substr(0, 1 + rng.index(text.size() - 2));
    }
  }
  return json{{"task", task_text}, {"actions", actions}}.dump();
}

// ---------------------------------------------------------------------------------------------
// Clients

MockLlmClient::MockLlmClient(double error_rate, std::uint64_t seed, MockOptions options)
    : error_rate_(error_rate), seed_(seed), options_(options) {}

std::string MockLlmClient::complete(const std::string& prompt) {
  const PromptSections sections = split_prompt(prompt);
  return mock_llm_plan(sections.task, sections.state, error_rate_, derive_seed(seed_, calls_++),
                       options_, &last_fault_);
}

ScriptedLlmClient::ScriptedLlmClient(std::vector<std::string> responses)
    : responses_(std::move(responses)) {}

std::string ScriptedLlmClient::complete(const std::string& prompt) {
  prompts_.push_back(prompt);
  if (responses_.empty()) throw TransportError("scripted client has no responses");
  const std::string& out = responses_[std::min(next_, responses_.size() - 1)];
  ++next_;
  return out;
}

HttpLlmClient::HttpLlmClient(HttpLlmConfig config) : config_(std::move(config)) {}

namespace {

std::string strip_fences(std::string text) {
  text = trimmed(text);
  if (text.rfind("```", 0) == 0) {
    const auto eol = text.find('\n');
    text = eol == std::string::npos ? std::string() : text.substr(eol + 1);
    const auto close = text.rfind("```");
    if (close != std::string::npos) text = text.substr(0, close);
  }
  return trimmed(text);
}

}  // namespace

std::string HttpLlmClient::complete(const std::string& prompt) {
  const std::string& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("endpoint must be an absolute URL");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (const char* key = std::getenv(config_.key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const json body = {{"model", config_.model},
                     {"temperature", 0},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  const auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    throw TransportError("request to " + origin + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    const json reply = json::parse(res->body);
    return strip_fences(reply.at("choices").at(0).at("message").at("content").get<std::string>());
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected completion body: ") + e.what());
  }
}

Result<Plan, PlanError> request_plan(LlmClient& client, const PromptBundle& bundle,
                                     const Workspace& ws, int max_repairs,
                                     const std::string& feedback, int* attempts) {
  if (max_repairs < 0) throw Error(Errc::invalid_value, "max_repairs must be >= 0", "request_plan");
  std::string repair = feedback;
  std::optional<PlanError> last;
  int calls = 0;
  for (int round = 0; round <= max_repairs; ++round) {
    const std::string response = client.complete(bundle.render(repair));
    ++calls;
    if (attempts) *attempts = calls;
    auto parsed = parse_plan(response, ws);
    if (parsed) {
      Plan plan = std::move(parsed).value();
      plan.source = client.source();
      return plan;
    }
    last = parsed.error();
    repair = "Your previous reply was rejected: " + last->to_json() +
             "\nReturn a corrected plan for the whole task.";
  }
  return *last;
}

}  // namespace lang2manip
