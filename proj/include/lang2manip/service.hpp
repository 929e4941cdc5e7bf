#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lang2manip/grounding.hpp"
#include "lang2manip/motion_planner.hpp"
#include "lang2manip/scene.hpp"
#include "lang2manip/symbolic.hpp"

namespace httplib {
class Server;
}

namespace lang2manip {

struct ClientConfig {
  std::string kind = "mock";  // "mock" or "http"
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  HttpLlmConfig http;
  MockOptions mock;
};

std::unique_ptr<LlmClient> make_client(const ClientConfig& config);

struct TaskOptions {
  int max_repairs = 3;
  std::uint64_t seed = 0;
  bool ground = true;  // false stops after the symbolic plan
  /// Only the first model reply counts: no repair round when it fails to validate.
  bool require_first_plan = false;
  GroundingConfig grounding;
};

struct TaskResult {
  std::string task;
  std::optional<Plan> plan;              // first valid plan
  std::optional<PlanError> plan_error;   // when no plan validated
  int attempts = 0;                      // model calls before a plan validated
  std::optional<ExecutionReport> execution;

  bool first_plan_valid() const { return plan.has_value() && attempts == 1; }
  nlohmann::json to_json(double dt) const;
};

/// textualize -> compose_prompt -> request_plan -> execute_plan.
TaskResult run_task(const Workspace& ws, const std::string& task, LlmClient& client,
                    const TaskOptions& options = {});

/// Every object named by a "put X in Z" task rests with its xy centre inside Z's footprint and
/// its bottom at or above Z's base.
bool put_task_satisfied(const Workspace& ws, const std::string& task);

struct MetricsConfig {
  int trials = 20;
  std::uint64_t seed = 0;
  double error_rate = 0.0;
  double jitter = 0.02;  // meters, applied to graspable objects in x and y
  std::string task = "Put the marker and eraser in the holder";
  bool ground = true;
  int max_repairs = 3;
  GroundingConfig grounding;
  MockOptions mock;
};

struct TrialRecord {
  int trial = 0;
  std::uint64_t seed = 0;
  bool symbolic_valid = false;  // first model reply validated
  bool ik_succeeded = false;    // no IK stage failed
  bool plans_succeeded = false; // every grounded action of the final plan succeeded
  bool task_success = false;    // goal predicate met
  std::string failure;          // "none" or the first failure class
  int queries_issued = 0;
  int queries_solved = 0;
};

struct MetricsReport {
  MetricsConfig config;
  std::vector<TrialRecord> trials;
  double task_success_rate = 0.0;
  std::optional<double> motion_feasibility;  // solved / issued planning queries
  double symbolic_accuracy = 0.0;

  nlohmann::json to_json() const;
};

/// Jitters graspable objects' xy within +-jitter, keeping them collision-free.
Workspace jitter_objects(const Workspace& ws, double jitter, std::uint64_t seed);

MetricsReport run_metrics(const Workspace& ws, const MetricsConfig& config);

/// In-memory planning sessions behind a JSON request/response interface.
class Service {
 public:
  struct Response {
    int status = 200;
    nlohmann::json body;
  };

  struct Options {
    double export_dt = 0.05;
    TaskOptions task;
    ClientConfig client;
  };

  Service();
  explicit Service(Options options);

  Response create_session(const nlohmann::json& body);
  Response set_planner(const std::string& id, const nlohmann::json& body);
  Response set_query(const std::string& id, const nlohmann::json& body);
  Response solve(const std::string& id);
  Response get_path(const std::string& id);
  Response state_text(const std::string& id);
  Response run_task(const std::string& id, const nlohmann::json& body);
  Response metrics(const nlohmann::json& body);

  /// Registers every endpoint on `server`.
  void mount(httplib::Server& server);

 private:
  struct Session {
    std::mutex mutex;
    Workspace workspace;
    std::optional<PlannerSpec> planner;
    std::optional<PlanningQuery> query;
    std::optional<Trajectory> path;
  };

  std::shared_ptr<Session> find(const std::string& id);

  Options options_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace lang2manip
