#include "choir/assistant.hpp"
#include "choir/diff.hpp"
#include "choir/error.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

using namespace choir;
using namespace choir::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected choir::Error");
  return ErrorCode::kInvalidArgument;
}

std::vector<SourceMessage> saved_messages() {
  const auto transcript = deadline_transcript("lab");
  return {transcript.end() - 3, transcript.end()};
}

DocumentFile policy() {
  return {"echolabs-policy.md", read_text(fixtures_dir() / "repo" / "echolabs-policy.md"), "rev"};
}

class FixedProvider final : public Provider {
 public:
  explicit FixedProvider(ProviderResponse r) : response_(std::move(r)) {}
  ProviderResponse complete(const ProviderRequest&) const override { return response_; }

 private:
  ProviderResponse response_;
};

}  // namespace

TEST_CASE("message cleaning and slugs") {
  CHECK(clean_message_text("@CHOIR  We aim\n for  it") == "We aim for it");
  CHECK(clean_message_text("<@U42> <@U43>hello") == "hello");
  CHECK(clean_message_text("   ").empty());
  CHECK(slug_for("@CHOIR We aim for a decision to submit a paper") == "we-aim-for-a-decision.md");
  CHECK(slug_for("Équipe: déjà vu!") == "équipe-déjà-vu.md");
}

TEST_CASE("scripted edit appends bullets to the best matching section") {
  const Assistant assistant(std::make_shared<ScriptedProvider>());
  const auto doc = policy();
  const auto messages = saved_messages();

  // Oracle placement: split the fixture at its headings by hand and pick the
  // closest section for each cleaned message.
  std::vector<std::pair<std::string, std::string>> sections = {{"(preamble)", ""}};
  for (const auto& line : split_lines_keep_eol(doc.content)) {
    if (line.rfind("## ", 0) == 0) sections.push_back({line.substr(3, line.size() - 4), ""});
    sections.back().second += line;
  }
  REQUIRE(sections.size() == 4);
  std::vector<std::string> placed;
  for (const auto& m : messages) {
    const auto q = oracle::embed(clean_message_text(m.text), kDefaultEmbeddingDimension);
    std::size_t best = 0;
    for (std::size_t i = 1; i < sections.size(); ++i) {
      if (oracle::cosine(q, oracle::embed(sections[i].second, kDefaultEmbeddingDimension)) >
          oracle::cosine(q, oracle::embed(sections[best].second, kDefaultEmbeddingDimension))) {
        best = i;
      }
    }
    placed.push_back(sections[best].first);
  }
  CHECK(placed == std::vector<std::string>{"Paper and Talk Writing", "Lab Meetings", "Paper and Talk Writing"});

  const auto edit = assistant.propose_edit(doc, messages);
  CHECK(edit.change_title == "Add 3 note(s) to Lab Meetings, Paper and Talk Writing");
  const auto diff = diff_documents(doc.content, edit.content);
  CHECK(diff.deleted_lines() == 0);
  CHECK(diff.inserted_lines() == 3);
  CHECK(edit.content.find("the rotation lives in the shared calendar.\n"
                          "* Yeah, that sounds safer.\n"
                          "\n## Paper and Talk Writing\n") != std::string::npos);
  CHECK(edit.content.find("* Practice talks happen at least one week before any conference presentation.\n"
                          "* True. How about deciding whether to submit or not a month ahead?\n"
                          "* We aim for a decision to submit a paper or not one month before the deadline.\n"
                          "\n## Code and Data\n") != std::string::npos);
}

TEST_CASE("scripted edit of an empty document starts with a title") {
  const Assistant assistant(std::make_shared<ScriptedProvider>());
  const auto edit = assistant.propose_edit({"paper-deadlines.md", "", ""}, {{"c", "a", "1", "@CHOIR Decide a month ahead."}});
  CHECK(edit.content == "# Paper deadlines\n\n* Decide a month ahead.\n");
}

TEST_CASE("degenerate provider output is refused") {
  ScriptedRules echo;
  echo.edit = ScriptedRules::EditRule::kEchoDocument;
  ScriptedRules empty;
  empty.edit = ScriptedRules::EditRule::kEmpty;
  CHECK(code_of([&] { Assistant(std::make_shared<ScriptedProvider>(echo)).propose_edit(policy(), saved_messages()); }) ==
        ErrorCode::kDegenerateOutput);
  CHECK(code_of([&] { Assistant(std::make_shared<ScriptedProvider>(empty)).propose_edit(policy(), saved_messages()); }) ==
        ErrorCode::kDegenerateOutput);
  CHECK(code_of([&] { Assistant(std::make_shared<ScriptedProvider>()).propose_edit(policy(), {}); }) ==
        ErrorCode::kInvalidArgument);
}

TEST_CASE("unavailable provider surfaces as ProviderUnavailable") {
  ScriptedRules down;
  down.unavailable = true;
  const Assistant assistant(std::make_shared<ScriptedProvider>(down));
  CHECK(code_of([&] { assistant.propose_edit(policy(), saved_messages()); }) == ErrorCode::kProviderUnavailable);
}

TEST_CASE("answers quote and cite the top chunk") {
  const Assistant assistant(std::make_shared<ScriptedProvider>());
  Chunk top{"lab-equipment.md#1", "lab-equipment.md", {"Lab Equipment", "3D Printer"}, 1, "## 3D Printer\n\nBook it.\n", 24};
  Chunk other{"travel.md#1", "travel.md", {"Travel"}, 1, "## Booking\n", 11};
  const auto answer = assistant.answer_question("How do I book the printer?", {{top, 0.7}, {other, 0.2}});
  CHECK(answer.text == top.text);
  CHECK(answer.cited_chunks == std::vector<std::string>{"lab-equipment.md#1"});
  CHECK_FALSE(answer.no_source);

  const auto none = assistant.answer_question("Anything?", {});
  CHECK(none.no_source);
  CHECK(none.cited_chunks.empty());
}

TEST_CASE("citations outside the grounding are dropped") {
  ProviderResponse r;
  r.text = "See the handbook.";
  r.cited_chunks = std::vector<std::string>{"made-up.md#0", "travel.md#1", "travel.md#1"};
  const Assistant assistant(std::make_shared<FixedProvider>(r));
  Chunk c{"travel.md#1", "travel.md", {}, 1, "x", 1};
  CHECK(assistant.answer_question("q", {{c, 0.5}}).cited_chunks == std::vector<std::string>{"travel.md#1"});
}

TEST_CASE("context summary template") {
  const Assistant assistant(std::make_shared<ScriptedProvider>());
  CHECK(assistant.summarize_context({}) == kNoPriorContext);
  RevisionRecord foreign;
  foreign.revision = std::string(40, 'f');
  CHECK(assistant.summarize_context({foreign}) == kNoPriorContext);

  RevisionRecord older;
  older.revision = "0123456789abcdef0123456789abcdef01234567";
  older.author_time = 100;
  older.context = ConversationContext{"p1", "adnan", "lee",
                                      {{"c", "caleb", "1", "@CHOIR " + std::string(100, 'x')}, {"c", "andy", "2", "ok"}},
                                      std::nullopt};
  RevisionRecord newer;
  newer.revision = "fedcba9876543210fedcba9876543210fedcba98";
  newer.author_time = 200;
  newer.context = ConversationContext{"p2", "caleb", "lee", {{"c", "caleb", "3", "Talks need a rehearsal."}}, "s"};

  const auto text = assistant.summarize_context({older, foreign, newer});
  CHECK(text ==
        "Context from 2 prior revision(s):\n"
        "- fedcba98 by caleb, approved by lee: \"Talks need a rehearsal.\"\n"
        "  participants: caleb\n"
        "- 01234567 by adnan, approved by lee: \"" + std::string(80, 'x') + "\"\n"
        "  participants: caleb, andy");
}

TEST_CASE("change summary counts lines per section") {
  const Assistant assistant(std::make_shared<ScriptedProvider>());
  const std::string base = "intro\n# A\n\none\n# B\n\ntwo\n";
  // Trailing blank lines are normalized away, so B loses two lines.
  CHECK(assistant.summarize_change(base, "intro\n# A\n\none\nnew\n# B\n\n") == "+1/−2 lines in A, B");
  CHECK(assistant.summarize_change(base, "intro\n# A\n\none\nnew\n# B\n\ntwo\n") == "+1/−0 lines in A");
  CHECK(assistant.summarize_change(base, "changed\n# A\n\none\n# B\n\ntwo\n") == "+1/−1 lines in (preamble)");
  CHECK(code_of([&] { assistant.summarize_change(base, base + "\n"); }) == ErrorCode::kEmptyEdit);
}

TEST_CASE("prompt templates render placeholders") {
  const auto templates = PromptTemplates::load(CHOIR_PROMPTS_DIR);
  const auto text = templates.render(AssistantTask::kAnswerQuestion, {{"question", "Q?"}, {"chunks", "[c#0]\nbody"}});
  CHECK(text.find("Q?") != std::string::npos);
  CHECK(text.find("[c#0]\nbody") != std::string::npos);
  CHECK(text.find("{{") == std::string::npos);
  TempDir tmp;
  CHECK(code_of([&] { PromptTemplates::load(tmp.path()); }) == ErrorCode::kConfigError);
}

TEST_CASE("remote provider request and response") {
  httplib::Server server;
  nlohmann::json seen;
  std::string auth;
  server.Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    if (seen["task"] == "summarize_change") {
      res.status = 503;
      return;
    }
    if (seen["task"] == "summarize_context") {
      res.set_content("not json", "text/plain");
      return;
    }
    res.set_content(R"({"text":"# Doc\n\n* added\n","title":"Add note\nignored"})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteProviderConfig config{"http://127.0.0.1:" + std::to_string(port) + "/v1/complete", "m-1", "secret", 5.0};
  const Assistant assistant(std::make_shared<RemoteProvider>(config, PromptTemplates::load(CHOIR_PROMPTS_DIR)));
  const auto edit = assistant.propose_edit({"doc.md", "# Doc\n", "r"}, {{"c", "a", "1", "added"}});
  CHECK(edit.content == "# Doc\n\n* added\n");
  CHECK(edit.change_title == "Add note");
  CHECK(seen["task"] == "propose_edit");
  CHECK(seen["model"] == "m-1");
  CHECK(seen["inputs"]["document"]["path"] == "doc.md");
  CHECK(seen["prompt"].get<std::string>().find("# Doc") != std::string::npos);
  CHECK(auth == "Bearer secret");

  CHECK(code_of([&] { assistant.summarize_change("a\n", "b\n"); }) == ErrorCode::kProviderUnavailable);
  RevisionRecord r;
  r.revision = std::string(40, 'a');
  r.context = ConversationContext{"p", "u", "m", {}, std::nullopt};
  CHECK(code_of([&] { assistant.summarize_context({r}); }) == ErrorCode::kProviderUnavailable);
  server.stop();
  thread.join();
}
