#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lang2manip/geometry.hpp"
#include "lang2manip/planner_spec.hpp"
#include "lang2manip/result.hpp"
#include "lang2manip/scene.hpp"
#include "lang2manip/textualizer.hpp"

namespace lang2manip {

enum class ActionKind { pick, place, move, push };
enum class Approach { top, side_x_pos, side_x_neg, side_y_pos, side_y_neg };

std::string_view to_string(ActionKind kind);
std::string_view to_string(Approach approach);  // "top", "side_x+", ...
std::optional<ActionKind> parse_action_kind(std::string_view text);
std::optional<Approach> parse_approach(std::string_view text);

/// a(o, p, r, k): object, goal parameters, refinement and planner.
struct SymbolicAction {
  ActionKind kind = ActionKind::pick;
  std::optional<std::string> object;
  std::optional<Pose> target_pose;  // place
  std::optional<Vec3> waypoint;     // move
  std::optional<Approach> approach; // pick
  std::optional<Vec3> direction;    // push, unit length after parsing
  std::optional<double> distance;   // push
  std::optional<PlannerAlgorithm> planner;

  PlannerAlgorithm effective_planner() const {
    return planner.value_or(PlannerAlgorithm::rrt_connect);
  }
};

enum class PlanSource { llm, mock };

struct Plan {
  std::string task;
  std::vector<SymbolicAction> actions;
  PlanSource source = PlanSource::llm;
  std::string raw;
};

enum class PlanErrorKind {
  malformed_json,
  missing_argument,
  unknown_object,
  unknown_action,
  unknown_planner,
  inconsistent_order,
  refusal,
};

std::string_view to_string(PlanErrorKind kind);

struct PlanError {
  PlanErrorKind kind = PlanErrorKind::malformed_json;
  long action_index = -1;  // -1 when not tied to one action
  std::string message;

  /// {"error": ..., "action_index": ..., "message": ...}
  std::string to_json() const;
};

/// Strict parse against the plan schema, then name and ordering checks against `ws`.
Result<Plan, PlanError> parse_plan(std::string_view response, const Workspace& ws);
/// Compact JSON carrying only the fields that are set.
std::string serialize_plan(const Plan& plan);

/// The shipped system prompt.
std::string_view default_system_prompt();

struct PromptBundle {
  std::string task;
  std::string system;
  std::string state;

  /// system, environment state, task and (when given) a repair section, in that order.
  std::string render(std::string_view repair = {}) const;
};

/// Throws Error(invalid_request) for an empty task.
PromptBundle compose_prompt(std::string_view task, std::string_view system_template,
                            const StateText& state);

/// Recovers the task and state sections from a rendered prompt.
struct PromptSections {
  std::string task;
  std::string state;
  std::string repair;
};
PromptSections split_prompt(std::string_view prompt);

/// "put the X [and Y ...] in|on|into|onto the Z", case-insensitive.
struct PutTask {
  std::vector<std::string> objects;
  std::string target;
};
std::optional<PutTask> parse_put_task(std::string_view task);

enum class FaultKind { drop_argument, swap_order, misspell_object, broken_json };

std::string_view to_string(FaultKind kind);

struct MockOptions {
  double stack_height = 0.15;  // vertical offset between successive placements
  double place_clearance = 0.002;
};

/// Rule-based stand-in for the language model. Answers "put the X [and Y ...] in/on the Z"; with
/// probability `error_rate` injects one fault. `injected` reports the fault, if any.
std::string mock_llm_plan(std::string_view task, std::string_view state_text, double error_rate,
                          std::uint64_t seed, const MockOptions& options = {},
                          std::optional<FaultKind>* injected = nullptr);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws TransportError when the backend cannot be reached.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual PlanSource source() const { return PlanSource::llm; }
};

class MockLlmClient : public LlmClient {
 public:
  MockLlmClient(double error_rate, std::uint64_t seed, MockOptions options = {});
  std::string complete(const std::string& prompt) override;
  PlanSource source() const override { return PlanSource::mock; }
  std::optional<FaultKind> last_fault() const { return last_fault_; }

 private:
  double error_rate_;
  std::uint64_t seed_;
  MockOptions options_;
  std::uint64_t calls_ = 0;
  std::optional<FaultKind> last_fault_;
};

/// Replays fixed responses in order, repeating the last one.
class ScriptedLlmClient : public LlmClient {
 public:
  explicit ScriptedLlmClient(std::vector<std::string> responses);
  std::string complete(const std::string& prompt) override;
  PlanSource source() const override { return PlanSource::mock; }
  const std::vector<std::string>& prompts() const { return prompts_; }

 private:
  std::vector<std::string> responses_;
  std::vector<std::string> prompts_;
  std::size_t next_ = 0;
};

struct HttpLlmConfig {
  std::string endpoint;  // e.g. https://host/v1/chat/completions
  std::string model;
  std::string key_env = "LANG2MANIP_LLM_KEY";
  int timeout_seconds = 60;
};

/// Chat-completion client: one user message holding the prompt.
class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(HttpLlmConfig config);
  std::string complete(const std::string& prompt) override;

 private:
  HttpLlmConfig config_;
};

/// Prompts, parses and re-prompts with a repair section until a plan validates or
/// `max_repairs` re-prompts are spent. `feedback` seeds the first repair section (e.g. a grounding
/// failure). TransportError propagates.
Result<Plan, PlanError> request_plan(LlmClient& client, const PromptBundle& bundle,
                                     const Workspace& ws, int max_repairs = 3,
                                     const std::string& feedback = {}, int* attempts = nullptr);

}  // namespace lang2manip
