#include "choir/assistant.hpp"

#include "choir/error.hpp"
#include "url.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace choir {
namespace {

using nlohmann::json;

json message_json(const SourceMessage& message) {
  return json{{"channel_id", message.channel_id},
              {"author_id", message.author_id},
              {"timestamp", message.timestamp},
              {"text", message.text}};
}

SourceMessage message_from_json(const json& j) {
  return SourceMessage{j.at("channel_id").get<std::string>(), j.at("author_id").get<std::string>(),
                       j.at("timestamp").get<std::string>(), j.at("text").get<std::string>()};
}

std::string truncate_code_points(std::string_view text, std::size_t limit) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (count == limit) return std::string(text.substr(0, i));
      ++count;
    }
  }
  return std::string(text);
}

std::string last_heading(const std::vector<std::string>& heading_path) {
  return heading_path.empty() ? std::string("(preamble)") : heading_path.back();
}

// Sections of `content`, one per heading, as (heading path, first line, line count).
struct SectionSpan {
  std::vector<std::string> heading_path;
  std::size_t first_line = 0;
  std::size_t line_count = 0;
};

std::vector<SectionSpan> section_spans(std::string_view content) {
  std::vector<SectionSpan> spans;
  std::size_t line = 0;
  for (const auto& chunk : segment_document("doc.md", content, std::numeric_limits<std::size_t>::max())) {
    const auto lines = split_lines_keep_eol(chunk.text).size();
    spans.push_back(SectionSpan{chunk.heading_path, line, lines});
    line += lines;
  }
  return spans;
}

std::string heading_for_line(const std::vector<SectionSpan>& spans, std::size_t line) {
  for (const auto& span : spans) {
    if (line >= span.first_line && line < span.first_line + span.line_count) return last_heading(span.heading_path);
  }
  return "(preamble)";
}

std::string humanize_stem(std::string_view path) {
  std::string stem(path.substr(path.rfind('/') == std::string_view::npos ? 0 : path.rfind('/') + 1));
  if (stem.size() > 3 && stem.substr(stem.size() - 3) == ".md") stem.resize(stem.size() - 3);
  std::replace(stem.begin(), stem.end(), '-', ' ');
  if (!stem.empty() && stem[0] >= 'a' && stem[0] <= 'z') stem[0] = static_cast<char>(stem[0] - 'a' + 'A');
  return stem;
}

ProviderResponse scripted_propose_edit(const ScriptedRules& rules, const json& inputs) {
  const auto path = inputs.at("document").at("path").get<std::string>();
  const auto content = inputs.at("document").at("content").get<std::string>();
  if (rules.edit == ScriptedRules::EditRule::kEchoDocument) return ProviderResponse{content, "Echo", {}, false};
  if (rules.edit == ScriptedRules::EditRule::kEmpty) return ProviderResponse{"", "Empty", {}, false};

  std::vector<SourceMessage> messages;
  for (const auto& m : inputs.at("messages")) messages.push_back(message_from_json(m));

  std::string base = content;
  if (base.empty()) base = "# " + humanize_stem(path) + "\n\n";
  auto lines = split_lines_keep_eol(base);
  if (!lines.empty() && lines.back().back() != '\n') lines.back().push_back('\n');

  const HashedEmbedder embedder;
  const auto chunks = segment_document(path, base, std::numeric_limits<std::size_t>::max());
  std::vector<EmbeddingVector> section_vectors;
  for (const auto& chunk : chunks) section_vectors.push_back(embedder.embed(chunk.text));
  const auto spans = section_spans(base);

  // Each note goes to its best-matching section, after the section's last
  // non-blank line.
  std::vector<std::vector<std::string>> additions(spans.size());
  std::set<std::string> touched;
  std::size_t notes = 0;
  for (const auto& message : messages) {
    const auto text = clean_message_text(message.text);
    if (text.empty() || spans.empty()) continue;
    std::size_t best = 0;
    double best_score = -2.0;
    const auto query = embedder.embed(text);
    for (std::size_t i = 0; i < section_vectors.size() && i < spans.size(); ++i) {
      const double score = cosine_similarity(query, section_vectors[i]);
      if (score > best_score) {
        best_score = score;
        best = i;
      }
    }
    additions[best].push_back("* " + text + "\n");
    touched.insert(last_heading(spans[best].heading_path));
    ++notes;
  }

  std::string out;
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const auto first = spans[s].first_line;
    const auto end = first + spans[s].line_count;
    std::size_t insert_at = end;
    while (insert_at > first && lines[insert_at - 1].find_first_not_of(" \t\n") == std::string::npos) --insert_at;
    for (std::size_t i = first; i < insert_at; ++i) out += lines[i];
    if (!additions[s].empty() && insert_at == first + 1 && end > insert_at) {
      // Heading followed only by blank lines: keep one blank line after it.
      out += "\n";
    }
    for (const auto& bullet : additions[s]) out += bullet;
    for (std::size_t i = insert_at; i < end; ++i) {
      if (!additions[s].empty() && insert_at == first + 1 && i == insert_at) continue;
      out += lines[i];
    }
  }

  std::string title;
  if (touched.empty()) {
    title = "No change";
  } else {
    std::string sections;
    for (const auto& heading : touched) sections += (sections.empty() ? "" : ", ") + heading;
    title = "Add " + std::to_string(notes) + " note(s) to " + sections;
  }
  return ProviderResponse{out, title, {}, false};
}

ProviderResponse scripted_answer(const json& inputs) {
  const auto& chunks = inputs.at("chunks");
  if (chunks.empty()) {
    return ProviderResponse{"I could not find an answer to that in the knowledge repository.", {},
                            std::vector<std::string>{}, true};
  }
  const auto& top = chunks.front();
  return ProviderResponse{top.at("text").get<std::string>(), {},
                          std::vector<std::string>{top.at("chunk_id").get<std::string>()}, false};
}

ProviderResponse scripted_summarize_context(const json& inputs) {
  std::vector<json> records;
  for (const auto& r : inputs.at("history")) {
    if (!r.at("context").is_null()) records.push_back(r);
  }
  std::stable_sort(records.begin(), records.end(), [](const json& a, const json& b) {
    return a.at("author_time").get<std::int64_t>() > b.at("author_time").get<std::int64_t>();
  });
  std::ostringstream out;
  out << "Context from " << records.size() << " prior revision(s):";
  for (const auto& r : records) {
    const auto& context = r.at("context");
    const auto& messages = context.at("messages");
    std::string first = messages.empty() ? std::string() : clean_message_text(messages.front().at("text").get<std::string>());
    out << "\n- " << r.at("revision").get<std::string>().substr(0, 8) << " by "
        << context.at("requester_id").get<std::string>() << ", approved by "
        << context.at("approver_id").get<std::string>() << ": \"" << truncate_code_points(first, 80) << "\"";
    std::vector<std::string> authors;
    for (const auto& m : messages) {
      const auto author = m.at("author_id").get<std::string>();
      if (std::find(authors.begin(), authors.end(), author) == authors.end()) authors.push_back(author);
    }
    if (!authors.empty()) {
      out << "\n  participants: ";
      for (std::size_t i = 0; i < authors.size(); ++i) out << (i == 0 ? "" : ", ") << authors[i];
    }
  }
  return ProviderResponse{out.str(), {}, {}, false};
}

ProviderResponse scripted_summarize_change(const json& inputs) {
  const auto base = inputs.at("base").get<std::string>();
  const auto proposed = inputs.at("proposed").get<std::string>();
  const auto diff = diff_documents(base, proposed);
  const auto base_spans = section_spans(base);
  const auto proposed_spans = section_spans(proposed);

  std::vector<std::string> sections;
  auto note = [&](std::string heading) {
    if (std::find(sections.begin(), sections.end(), heading) == sections.end()) sections.push_back(std::move(heading));
  };
  std::size_t base_line = 0;
  std::size_t proposed_line = 0;
  for (const auto& hunk : diff.hunks) {
    for (std::size_t i = 0; i < hunk.lines.size(); ++i) {
      switch (hunk.op) {
        case DiffOp::kKeep:
          ++base_line;
          ++proposed_line;
          break;
        case DiffOp::kDelete:
          note(heading_for_line(base_spans, base_line++));
          break;
        case DiffOp::kInsert:
          note(heading_for_line(proposed_spans, proposed_line++));
          break;
      }
    }
  }
  std::string list;
  for (const auto& s : sections) list += (list.empty() ? "" : ", ") + s;
  return ProviderResponse{"+" + std::to_string(diff.inserted_lines()) + "/−" + std::to_string(diff.deleted_lines()) +
                              " lines in " + (list.empty() ? std::string("(no sections)") : list),
                          {}, {}, false};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read prompt template " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string render_messages(const json& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += "[" + m.at("timestamp").get<std::string>() + "] " + m.at("author_id").get<std::string>() + ": " +
           m.at("text").get<std::string>() + "\n";
  }
  return out;
}

}  // namespace

std::string_view assistant_task_name(AssistantTask task) {
  switch (task) {
    case AssistantTask::kProposeEdit: return "propose_edit";
    case AssistantTask::kAnswerQuestion: return "answer_question";
    case AssistantTask::kSummarizeContext: return "summarize_context";
    case AssistantTask::kSummarizeChange: return "summarize_change";
  }
  return "propose_edit";
}

std::string clean_message_text(std::string_view text) {
  std::string collapsed;
  bool space = false;
  for (const char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      space = true;
      continue;
    }
    if (space && !collapsed.empty()) collapsed.push_back(' ');
    space = false;
    collapsed.push_back(c);
  }
  // Leading mentions: "@name" or "<@U123>".
  std::string_view rest = collapsed;
  while (!rest.empty() && (rest.front() == '@' || rest.substr(0, 2) == "<@")) {
    const auto end = rest.front() == '@' ? rest.find(' ') : rest.find('>');
    if (end == std::string_view::npos) return {};
    rest = rest.substr(rest.front() == '@' ? end : end + 1);
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  }
  return std::string(rest);
}

std::string slug_for(std::string_view text, std::size_t max_words) {
  const auto tokens = tokenize(clean_message_text(text));
  std::string slug;
  for (std::size_t i = 0; i < tokens.size() && i < max_words; ++i) slug += (i == 0 ? "" : "-") + tokens[i];
  if (slug.empty()) slug = "note";
  return slug + ".md";
}

ProviderResponse ScriptedProvider::complete(const ProviderRequest& request) const {
  if (rules_.unavailable) throw Error(ErrorCode::kProviderUnavailable, "scripted provider is offline");
  try {
    switch (request.task) {
      case AssistantTask::kProposeEdit: return scripted_propose_edit(rules_, request.inputs);
      case AssistantTask::kAnswerQuestion: return scripted_answer(request.inputs);
      case AssistantTask::kSummarizeContext: return scripted_summarize_context(request.inputs);
      case AssistantTask::kSummarizeChange: return scripted_summarize_change(request.inputs);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("scripted provider input: ") + e.what());
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown task");
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  PromptTemplates templates;
  for (const auto task : {AssistantTask::kProposeEdit, AssistantTask::kAnswerQuestion,
                          AssistantTask::kSummarizeContext, AssistantTask::kSummarizeChange}) {
    templates.templates_[task] = read_file(dir / (std::string(assistant_task_name(task)) + ".txt"));
  }
  return templates;
}

std::string PromptTemplates::render(AssistantTask task, const std::map<std::string, std::string>& values) const {
  const auto it = templates_.find(task);
  if (it == templates_.end()) throw Error(ErrorCode::kConfigError, "no template for " + std::string(assistant_task_name(task)));
  std::string out;
  const std::string& text = it->second;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string::npos) break;
    const auto close = text.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(text, pos, open - pos);
    const auto name = text.substr(open + 2, close - open - 2);
    const auto value = values.find(name);
    if (value != values.end()) {
      out += value->second;
    } else {
      out.append(text, open, close + 2 - open);
    }
    pos = close + 2;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

RemoteProvider::RemoteProvider(RemoteProviderConfig config, PromptTemplates templates)
    : config_(std::move(config)), templates_(std::move(templates)) {}

ProviderResponse RemoteProvider::complete(const ProviderRequest& request) const {
  std::map<std::string, std::string> values;
  const auto& in = request.inputs;
  switch (request.task) {
    case AssistantTask::kProposeEdit:
      values["document"] = in.at("document").at("content").get<std::string>();
      values["messages"] = render_messages(in.at("messages"));
      break;
    case AssistantTask::kAnswerQuestion: {
      values["question"] = in.at("question").get<std::string>();
      std::string chunks;
      for (const auto& c : in.at("chunks")) {
        chunks += "[" + c.at("chunk_id").get<std::string>() + "]\n" + c.at("text").get<std::string>() + "\n";
      }
      values["chunks"] = chunks;
      break;
    }
    case AssistantTask::kSummarizeContext: {
      std::string history;
      for (const auto& r : in.at("history")) {
        if (r.at("context").is_null()) continue;
        history += "Revision " + r.at("revision").get<std::string>() + " requested by " +
                   r.at("context").at("requester_id").get<std::string>() + ", approved by " +
                   r.at("context").at("approver_id").get<std::string>() + "\n" +
                   render_messages(r.at("context").at("messages"));
      }
      values["history"] = history;
      break;
    }
    case AssistantTask::kSummarizeChange: {
      std::string rendered;
      for (const auto& hunk : in.at("diff")) {
        const auto op = hunk.at("op").get<std::string>();
        const char* prefix = op == "insert" ? "+ " : op == "delete" ? "- " : "  ";
        for (const auto& line : hunk.at("lines")) rendered += prefix + line.get<std::string>();
      }
      values["diff"] = rendered;
      break;
    }
  }

  const json body = {{"task", std::string(assistant_task_name(request.task))},
                     {"model", config_.model},
                     {"prompt", templates_.render(request.task, values)},
                     {"inputs", request.inputs}};
  const auto url = detail::split_url(config_.endpoint);
  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_secs));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  const auto response = client.Post(url.path, headers, body.dump(), "application/json");
  if (!response) {
    throw Error(ErrorCode::kProviderUnavailable, "assistant " + config_.endpoint + ": " + httplib::to_string(response.error()));
  }
  if (response->status != 200) {
    throw Error(ErrorCode::kProviderUnavailable, "assistant returned HTTP " + std::to_string(response->status));
  }
  try {
    const auto reply = json::parse(response->body);
    ProviderResponse out;
    out.text = reply.at("text").get<std::string>();
    if (reply.contains("title") && reply["title"].is_string()) out.title = reply["title"].get<std::string>();
    if (reply.contains("cited_chunks") && reply["cited_chunks"].is_array()) {
      out.cited_chunks = reply["cited_chunks"].get<std::vector<std::string>>();
    }
    out.no_source = reply.value("no_source", false);
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, std::string("assistant response unreadable: ") + e.what());
  }
}

ProposedEdit Assistant::propose_edit(const DocumentFile& document, const std::vector<SourceMessage>& messages) const {
  if (messages.empty()) throw Error(ErrorCode::kInvalidArgument, "propose_edit needs at least one message");
  json message_list = json::array();
  for (const auto& m : messages) message_list.push_back(message_json(m));
  const auto base = normalize_content(document.content);
  const auto response = provider_->complete(ProviderRequest{
      AssistantTask::kProposeEdit,
      json{{"document", {{"path", document.path}, {"content", base}, {"revision", document.revision}}},
           {"messages", message_list}}});
  auto content = normalize_content(response.text);
  if (content.empty()) throw Error(ErrorCode::kDegenerateOutput, "provider returned empty content");
  if (content == base) throw Error(ErrorCode::kDegenerateOutput, "provider returned the document unchanged");
  std::string title = response.title.value_or("");
  const auto eol = title.find_first_of("\r\n");
  if (eol != std::string::npos) title.resize(eol);
  if (title.empty()) title = "Update " + document.path;
  return ProposedEdit{std::move(content), std::move(title)};
}

Answer Assistant::answer_question(std::string_view question, const std::vector<ScoredChunk>& grounding) const {
  json chunks = json::array();
  std::set<std::string> supplied;
  for (const auto& scored : grounding) {
    supplied.insert(scored.chunk.chunk_id);
    chunks.push_back(json{{"chunk_id", scored.chunk.chunk_id},
                          {"doc_path", scored.chunk.doc_path},
                          {"heading_path", scored.chunk.heading_path},
                          {"text", scored.chunk.text},
                          {"score", scored.score}});
  }
  const auto response = provider_->complete(
      ProviderRequest{AssistantTask::kAnswerQuestion, json{{"question", std::string(question)}, {"chunks", chunks}}});
  Answer answer;
  answer.text = response.text;
  const auto cited = response.cited_chunks.value_or(std::vector<std::string>(supplied.begin(), supplied.end()));
  for (const auto& id : cited) {
    if (supplied.count(id) != 0 &&
        std::find(answer.cited_chunks.begin(), answer.cited_chunks.end(), id) == answer.cited_chunks.end()) {
      answer.cited_chunks.push_back(id);
    }
  }
  answer.no_source = grounding.empty() || response.no_source;
  if (answer.no_source) answer.cited_chunks.clear();
  return answer;
}

std::string Assistant::summarize_context(const std::vector<RevisionRecord>& records) const {
  json history = json::array();
  bool any = false;
  for (const auto& record : records) {
    json context = nullptr;
    if (record.context) {
      any = true;
      json messages = json::array();
      for (const auto& m : record.context->messages) messages.push_back(message_json(m));
      context = json{{"proposal_id", record.context->proposal_id},
                     {"requester_id", record.context->requester_id},
                     {"approver_id", record.context->approver_id},
                     {"messages", messages},
                     {"summary", record.context->summary ? json(*record.context->summary) : json(nullptr)}};
    }
    history.push_back(json{{"revision", record.revision}, {"author_time", record.author_time}, {"context", context}});
  }
  if (!any) return std::string(kNoPriorContext);
  auto text = provider_->complete(ProviderRequest{AssistantTask::kSummarizeContext, json{{"history", history}}}).text;
  if (text.empty()) throw Error(ErrorCode::kDegenerateOutput, "provider returned an empty context summary");
  return text;
}

std::string Assistant::summarize_change(std::string_view base_content, std::string_view proposed_content) const {
  const auto base = normalize_content(base_content);
  const auto proposed = normalize_content(proposed_content);
  if (base == proposed) throw Error(ErrorCode::kEmptyEdit, "contents are identical after normalization");
  json hunks = json::array();
  for (const auto& hunk : diff_documents(base, proposed).hunks) {
    hunks.push_back(json{{"op", std::string(diff_op_name(hunk.op))}, {"lines", hunk.lines}});
  }
  auto text = provider_
                  ->complete(ProviderRequest{AssistantTask::kSummarizeChange,
                                             json{{"base", base}, {"proposed", proposed}, {"diff", hunks}}})
                  .text;
  if (text.empty()) throw Error(ErrorCode::kDegenerateOutput, "provider returned an empty change summary");
  return text;
}

}  // namespace choir
