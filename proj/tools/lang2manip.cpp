// Command-line front end: one-shot planning, tasks, metrics, validation and the HTTP service.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lang2manip/errors.hpp"
#include "lang2manip/grounding.hpp"
#include "lang2manip/motion_planner.hpp"
#include "lang2manip/scene.hpp"
#include "lang2manip/service.hpp"
#include "lang2manip/textualizer.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro collides with Eigen internals.
#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

namespace l2m = lang2manip;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw l2m::Error(l2m::Errc::unresolved_path, "cannot open file", path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void emit(const std::string& text, const std::string& output) {
  if (output.empty() || output == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(output, std::ios::binary);
  if (!out) throw l2m::Error(l2m::Errc::unresolved_path, "cannot write file", output);
  out << text << '\n';
}

struct ClientFlags {
  std::string kind = "mock";
  double error_rate = 0.0;
  std::uint64_t seed = 0;
  std::string endpoint;
  std::string model = "gpt-4";
  int timeout = 60;

  void add_to(CLI::App* app) {
    app->add_option("--client", kind, "LLM client")->check(CLI::IsMember({"mock", "http"}));
    app->add_option("--error-rate", error_rate, "mock fault probability")->check(CLI::Range(0.0, 1.0));
    app->add_option("--client-seed", seed, "mock client seed");
    app->add_option("--endpoint", endpoint, "chat-completions URL for the http client");
    app->add_option("--model", model, "model name sent to the endpoint");
    app->add_option("--timeout", timeout, "endpoint timeout in seconds");
  }

  l2m::ClientConfig config() const {
    l2m::ClientConfig c;
    c.kind = kind;
    c.error_rate = error_rate;
    c.seed = seed;
    c.http.endpoint = endpoint;
    c.http.model = model;
    c.http.timeout_seconds = timeout;
    return c;
  }
};

std::vector<double> controlled_or(const std::vector<double>& given, const l2m::Workspace& ws,
                                  const std::optional<l2m::JointConfig>& fallback,
                                  const char* label) {
  if (!given.empty()) return given;
  if (!fallback) {
    throw l2m::Error(l2m::Errc::invalid_request,
                     std::string("problem has no query; pass --") + label, label);
  }
  return ws.controlled_values(*fallback);
}

bool looks_like_problem(const std::string& text) {
  const auto pos = text.find('<', text.find_first_not_of(" \t\r\n\xEF\xBB\xBF"));
  return text.compare(pos == std::string::npos ? 0 : pos, 8, "<Problem") == 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-driven manipulation planning"};
  app.set_config("--config", "", "TOML/INI file with default option values");
  app.require_subcommand(1);

  std::string problem, output;
  double dt = 0.05;

  auto* plan_cmd = app.add_subcommand("plan", "plan one joint-space query");
  std::vector<double> init, goal;
  std::string algorithm;
  std::optional<std::uint64_t> plan_seed;
  plan_cmd->add_option("problem", problem, "problem file")->required()->check(CLI::ExistingFile);
  plan_cmd->add_option("--init", init, "controlled joint values (default: problem query)");
  plan_cmd->add_option("--goal", goal, "controlled joint values (default: problem query)");
  plan_cmd->add_option("--algorithm", algorithm, "RRT or RRTConnect (default: problem planner)");
  plan_cmd->add_option("--seed", plan_seed, "planner seed");
  plan_cmd->add_option("--dt", dt, "sampling interval of the timed path")->check(CLI::PositiveNumber);
  plan_cmd->add_option("-o,--output", output, "output file (default stdout)");

  auto* task_cmd = app.add_subcommand("task", "plan and ground a natural-language task");
  std::string task_text;
  l2m::TaskOptions task_options;
  bool no_ground = false;
  ClientFlags client_flags;
  task_cmd->add_option("problem", problem, "problem file")->required()->check(CLI::ExistingFile);
  task_cmd->add_option("task", task_text, "task text")->required();
  task_cmd->add_option("--max-repairs", task_options.max_repairs, "re-prompt budget");
  task_cmd->add_option("--seed", task_options.seed, "grounding seed");
  task_cmd->add_flag("--no-ground", no_ground, "stop after the symbolic plan");
  task_cmd->add_option("--dt", dt, "sampling interval of the timed paths")->check(CLI::PositiveNumber);
  task_cmd->add_option("-o,--output", output, "output file (default stdout)");
  client_flags.add_to(task_cmd);

  auto* text_cmd = app.add_subcommand("textualize", "print the state description of a problem");
  text_cmd->add_option("problem", problem, "problem file")->required()->check(CLI::ExistingFile);
  text_cmd->add_option("-o,--output", output, "output file (default stdout)");

  auto* metrics_cmd = app.add_subcommand("metrics", "run repeated mock-client trials");
  l2m::MetricsConfig metrics;
  bool metrics_no_ground = false;
  metrics_cmd->add_option("problem", problem, "problem file")->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--trials", metrics.trials, "number of trials")->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--seed", metrics.seed, "base seed");
  metrics_cmd->add_option("--error-rate", metrics.error_rate, "mock fault probability")
      ->check(CLI::Range(0.0, 1.0));
  metrics_cmd->add_option("--jitter", metrics.jitter, "object xy jitter in meters")
      ->check(CLI::NonNegativeNumber);
  metrics_cmd->add_option("--task", metrics.task, "task text");
  metrics_cmd->add_option("--max-repairs", metrics.max_repairs, "re-prompt budget");
  metrics_cmd->add_flag("--no-ground", metrics_no_ground, "count symbolic validity only");
  metrics_cmd->add_option("-o,--output", output, "output file (default stdout)");

  auto* serve_cmd = app.add_subcommand("serve", "start the HTTP planning service");
  std::string bind = "127.0.0.1";
  int port = 8080;
  ClientFlags serve_client;
  serve_cmd->add_option("--bind", bind, "bind address");
  serve_cmd->add_option("--port", port, "TCP port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--dt", dt, "sampling interval of exported paths")->check(CLI::PositiveNumber);
  serve_client.add_to(serve_cmd);

  auto* validate_cmd = app.add_subcommand("validate", "parse-check problem and model files");
  std::vector<std::string> files;
  validate_cmd->add_option("files", files, "problem or model files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*plan_cmd) {
      l2m::Workspace ws = l2m::load_problem_path(problem);
      l2m::PlannerSpec spec = ws.active_planner;
      if (!algorithm.empty()) {
        auto a = l2m::parse_planner_algorithm(algorithm);
        if (!a) throw l2m::Error(l2m::Errc::unknown_planner, "unknown algorithm '" + algorithm + "'");
        spec.algorithm = *a;
      }
      if (plan_seed) spec.params.seed = *plan_seed;
      const auto staged = ws.query;
      l2m::PlanningQuery query{
          ws.expand_controlled(controlled_or(init, ws, staged ? std::optional(staged->start) : std::nullopt, "init"),
                               ws.current_config),
          ws.expand_controlled(controlled_or(goal, ws, staged ? std::optional(staged->goal) : std::nullopt, "goal"),
                               ws.current_config)};
      auto result = l2m::plan(ws, spec, query);
      if (!result) {
        json failure = {{"solved", false},
                        {"reason", std::string(l2m::to_string(result.error().reason))},
                        {"message", result.error().message}};
        emit(failure.dump(2), output);
        return 2;
      }
      json doc = l2m::trajectory_document(ws, result.value(), dt);
      doc["algorithm"] = std::string(l2m::to_string(spec.algorithm));
      emit(doc.dump(2), output);
      return 0;
    }
    if (*task_cmd) {
      l2m::Workspace ws = l2m::load_problem_path(problem);
      auto client = l2m::make_client(client_flags.config());
      task_options.ground = !no_ground;
      const l2m::TaskResult result = l2m::run_task(ws, task_text, *client, task_options);
      emit(result.to_json(dt).dump(2), output);
      if (result.plan_error && !result.plan) return 3;
      return result.execution && !result.execution->success ? 2 : 0;
    }
    if (*text_cmd) {
      emit(l2m::textualize(l2m::load_problem_path(problem)).rendered, output);
      return 0;
    }
    if (*metrics_cmd) {
      metrics.ground = !metrics_no_ground;
      emit(l2m::run_metrics(l2m::load_problem_path(problem), metrics).to_json().dump(2), output);
      return 0;
    }
    if (*serve_cmd) {
      l2m::Service::Options options;
      options.export_dt = dt;
      options.client = serve_client.config();
      l2m::Service service(options);
      httplib::Server server;
      service.mount(server);
      std::cerr << "listening on " << bind << ':' << port << '\n';
      if (!server.listen(bind, port)) {
        std::cerr << "error: cannot listen on " << bind << ':' << port << '\n';
        return 1;
      }
      return 0;
    }
    if (*validate_cmd) {
      int failures = 0;
      for (const std::string& file : files) {
        try {
          const std::string text = read_file(file);
          if (looks_like_problem(text)) {
            const l2m::Workspace ws = l2m::load_problem_path(file);
            std::cout << file << ": ok (problem, " << ws.robot.dof() << " dof, "
                      << ws.obstacles.size() << " obstacles)\n";
            for (const std::string& w : ws.warnings) std::cout << "  warning: " << w << '\n';
          } else if (text.find("<Joint") == std::string::npos) {
            const l2m::PosedShape body = l2m::parse_object_model(text);
            std::cout << file << ": ok (object, " << l2m::to_string(body.shape.kind) << ")\n";
          } else {
            const l2m::RobotModel model = l2m::parse_robot_model(text);
            std::cout << file << ": ok (model, " << model.links.size() << " links)\n";
          }
        } catch (const l2m::Error& e) {
          ++failures;
          std::cout << file << ": " << l2m::to_string(e.code()) << ": " << e.what() << '\n';
        }
      }
      return failures == 0 ? 0 : 1;
    }
  } catch (const l2m::Error& e) {
    std::cerr << "error [" << l2m::to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const l2m::TransportError& e) {
    std::cerr << "error [transport]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
