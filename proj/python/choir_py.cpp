#include "choir/config.hpp"
#include "choir/context_codec.hpp"
#include "choir/diff.hpp"
#include "choir/error.hpp"
#include "choir/gateway.hpp"
#include "choir/knowledge_index.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

namespace py = pybind11;
using namespace choir;

namespace {

// JSON crosses the boundary as text; the Python side decodes it.
std::string dump(const nlohmann::json& j) { return j.dump(); }

std::vector<SourceMessage> messages_from(const std::vector<py::dict>& items) {
  std::vector<SourceMessage> out;
  for (const auto& m : items) {
    out.push_back({m["channel_id"].cast<std::string>(), m["author_id"].cast<std::string>(),
                   m["timestamp"].cast<std::string>(), m["text"].cast<std::string>()});
  }
  return out;
}

py::dict context_to_dict(const ConversationContext& c) {
  py::list messages;
  for (const auto& m : c.messages) {
    py::dict d;
    d["channel_id"] = m.channel_id;
    d["author_id"] = m.author_id;
    d["timestamp"] = m.timestamp;
    d["text"] = m.text;
    messages.append(d);
  }
  py::dict out;
  out["proposal_id"] = c.proposal_id;
  out["requester_id"] = c.requester_id;
  out["approver_id"] = c.approver_id;
  out["messages"] = messages;
  out["summary"] = c.summary ? py::object(py::str(*c.summary)) : py::object(py::none());
  return out;
}

}  // namespace

PYBIND11_MODULE(_choir, m) {
  m.doc() = "CHOIR core bindings";

  static py::handle choir_error = py::exception<Error>(m, "ChoirError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetObject(choir_error.ptr(), py::make_tuple(std::string(error_code_name(e.code())), e.what()).ptr());
    }
  });

  m.def("encode_context",
        [](const std::string& proposal_id, const std::string& requester, const std::string& approver,
           const std::vector<py::dict>& messages, std::optional<std::string> summary) {
          return encode_context({proposal_id, requester, approver, messages_from(messages), std::move(summary)});
        },
        py::arg("proposal_id"), py::arg("requester_id"), py::arg("approver_id"), py::arg("messages"),
        py::arg("summary") = py::none());
  m.def("decode_context", [](const std::string& message) -> py::object {
    const auto c = decode_context(message);
    if (!c) return py::none();
    return context_to_dict(*c);
  });

  m.def("tokenize", [](const std::string& text) { return tokenize(text); });
  m.def("embed", [](const std::string& text, std::size_t dimension) {
    return HashedEmbedder(dimension).embed(text).values;
  }, py::arg("text"), py::arg("dimension") = kDefaultEmbeddingDimension);
  m.def("segment_document", [](const std::string& path, const std::string& content, std::size_t max_chars) {
    std::vector<py::dict> out;
    for (const auto& c : segment_document(path, content, max_chars)) {
      py::dict d;
      d["chunk_id"] = c.chunk_id;
      d["heading_path"] = c.heading_path;
      d["ordinal"] = c.ordinal;
      d["text"] = c.text;
      d["char_count"] = c.char_count;
      out.push_back(d);
    }
    return out;
  }, py::arg("path"), py::arg("content"), py::arg("max_chunk_chars") = kDefaultMaxChunkChars);

  m.def("diff", [](const std::string& base, const std::string& proposed) {
    return dump(to_json(diff_documents(base, proposed)));
  });

  py::class_<Service>(m, "Service")
      .def(py::init([](const std::string& config_text, const std::string& base_dir) {
             auto config = parse_config(config_text, base_dir);
             validate_config(config);
             return std::make_unique<Service>(std::move(config));
           }),
           py::arg("config_text"), py::arg("base_dir") = "")
      .def("ingest",
           [](Service& s, const std::string& event) {
             nlohmann::json j;
             try {
               j = nlohmann::json::parse(event);
             } catch (const nlohmann::json::exception& e) {
               throw Error(ErrorCode::kMalformedEvent, e.what());
             }
             py::gil_scoped_release release;
             const auto r = s.ingest(j);
             return std::make_pair(r.status, dump(r.body));
           })
      .def("sweep", [](Service& s, std::int64_t now) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& a : s.sweep(now)) out.push_back(to_json(a));
        return dump(out);
      })
      .def("actions_since", [](const Service& s, std::uint64_t since) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& a : s.actions_since(since)) out.push_back(to_json(a));
        return dump(out);
      })
      .def("last_seq", &Service::last_seq)
      .def("documents", [](const Service& s) { return dump(s.documents_view()); })
      .def("document", [](const Service& s, const std::string& path, std::optional<std::string> revision) {
        return dump(s.document_view(path, revision));
      }, py::arg("path"), py::arg("revision") = py::none())
      .def("history", [](const Service& s, const std::string& path) { return dump(s.history_view(path)); })
      .def("flow", [](const Service& s, const std::string& id) -> py::object {
        const auto v = s.flow_view(id);
        if (!v) return py::none();
        return py::str(dump(*v));
      })
      .def("health", [](const Service& s) { return dump(s.health_view()); });
}
