#pragma once

#include "choir/assistant.hpp"
#include "choir/knowledge_index.hpp"
#include "choir/repo_store.hpp"
#include "choir/workflow.hpp"

#include "support.hpp"

#include <memory>

namespace choir::testing {

// A workflow engine over a temporary repository with the scripted provider.
struct Harness {
  explicit Harness(bool seed = true, std::vector<std::string> managers = {"lee"}, ScriptedRules rules = {})
      : repo(open_repo(tmp.path() / "repo", seed)),
        index(repo, std::make_shared<HashedEmbedder>()),
        assistant(std::make_shared<ScriptedProvider>(rules)),
        engine(repo, index, assistant, WorkflowConfig{std::move(managers)}, [this] {
          ++repository_changes;
          index.rebuild();
        }) {}

  static RepositoryHandle open_repo(const fs::path& root, bool seed) {
    if (seed) seed_fixture_repo(root);
    return RepositoryHandle::open(root, true);
  }

  EventContext ctx() {
    now += 60;
    return EventContext{ids, now};
  }

  fs::path root() const { return tmp.path() / "repo"; }

  TempDir tmp;
  RepositoryHandle repo;
  KnowledgeIndex index;
  Assistant assistant;
  WorkflowEngine engine;
  IdSource ids{"harness"};
  std::int64_t now = 1772618400;
  int repository_changes = 0;
};

}  // namespace choir::testing
