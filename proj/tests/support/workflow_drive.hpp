#pragma once

// Scenario helpers over a Harness, and the exhaustive (state x event) drive
// shared by the workflow unit test and the acceptance binary.

#include "choir/error.hpp"
#include "choir/workflow.hpp"

#include "harness.hpp"
#include "support.hpp"

#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace choir::testing {

inline std::vector<SourceMessage> last3(const std::vector<SourceMessage>& t) { return {t.end() - 3, t.end()}; }

// Mention + selection of the three deadline messages; returns the flow id.
inline std::string propose_deadline_update(Harness& h) {
  const auto transcript = deadline_transcript("lab");
  auto ctx = h.ctx();
  const auto mention = h.engine.handle_mention(ctx, "lab", "adnan", transcript.back().text, transcript.back().timestamp,
                                               {transcript.begin(), transcript.end() - 1});
  const auto flow_id = flow_id_in(mention.actions.at(0));
  auto ctx2 = h.ctx();
  h.engine.select_messages(ctx2, flow_id, "adnan", last3(transcript));
  return flow_id;
}

inline std::string open_decision(Harness& h) {
  const auto id = propose_deadline_update(h);
  auto ctx = h.ctx();
  h.engine.start_discussion(ctx, id, "adnan");
  return id;
}

inline std::string answered_question(Harness& h) {
  auto ctx = h.ctx();
  const auto out = h.engine.handle_direct_question(ctx, "dm-andy", "andy", "How do I reserve the 3D printer?");
  return out.changed_flows.at(0);
}

using TransitionKey = std::tuple<FlowKind, FlowState, FlowEvent>;

// Transition table written out from the workflow description, independent of
// allowed_transitions().
inline std::map<TransitionKey, std::set<FlowState>> expected_table() {
  using S = FlowState;
  using E = FlowEvent;
  const auto U = FlowKind::kUpdate;
  const auto Q = FlowKind::kQuestion;
  return {
      {{U, S::kAwaitingSelection, E::kSelectMessages}, {S::kProposalShown}},
      {{U, S::kAwaitingSelection, E::kExpire}, {S::kAbandoned}},
      {{U, S::kProposalShown, E::kNextSuggestion}, {S::kProposalShown}},
      {{U, S::kProposalShown, E::kCreateNewDocument}, {S::kProposalShown}},
      {{U, S::kProposalShown, E::kStartDiscussion}, {S::kDiscussionOpen}},
      {{U, S::kProposalShown, E::kExpire}, {S::kAbandoned}},
      {{U, S::kDiscussionOpen, E::kContextPosted}, {S::kAwaitingDecision}},
      {{U, S::kDiscussionOpen, E::kInviteParticipant}, {S::kDiscussionOpen}},
      {{U, S::kDiscussionOpen, E::kExpire}, {S::kAbandoned}},
      {{U, S::kAwaitingDecision, E::kInviteParticipant}, {S::kAwaitingDecision}},
      {{U, S::kAwaitingDecision, E::kRegenerate}, {S::kAwaitingDecision}},
      {{U, S::kAwaitingDecision, E::kApprove}, {S::kApplied, S::kAwaitingDecision}},
      {{U, S::kAwaitingDecision, E::kReject}, {S::kRejected}},
      {{U, S::kAwaitingDecision, E::kExpire}, {S::kAbandoned}},
      {{Q, S::kAsked, E::kAnswerPosted}, {S::kAnswered}},
      {{Q, S::kAnswered, E::kHelpful}, {S::kResolved}},
      {{Q, S::kAnswered, E::kNotHelpful}, {S::kDiscussionOpen}},
      {{Q, S::kDiscussionOpen, E::kInviteParticipant}, {S::kDiscussionOpen}},
      {{Q, S::kDiscussionOpen, E::kSpawnUpdate}, {S::kEscalatedToUpdate}},
  };
}

struct DriveReport {
  std::vector<std::string> failures;
  std::size_t pairs = 0;
  std::size_t covered = 0;
  std::size_t specified = 0;
};

namespace detail {

// Puts a fresh harness's flow into `state` through the API; returns its id.
inline std::string reach(Harness& h, FlowKind kind, FlowState state) {
  using S = FlowState;
  std::string id;
  if (kind == FlowKind::kUpdate) {
    switch (state) {
      case S::kAwaitingSelection: {
        auto ctx = h.ctx();
        const auto t = deadline_transcript("lab");
        id = flow_id_in(h.engine.handle_mention(ctx, "lab", "adnan", t.back().text, t.back().timestamp,
                                                {t.begin(), t.end() - 1}).actions.at(0));
        break;
      }
      case S::kProposalShown: id = propose_deadline_update(h); break;
      case S::kDiscussionOpen:
      case S::kAwaitingDecision: id = open_decision(h); break;
      case S::kApplied:
      case S::kRejected: {
        id = open_decision(h);
        auto ctx = h.ctx();
        h.engine.manager_decide(ctx, id, "lee", state == S::kApplied ? Decision::kApprove : Decision::kReject);
        break;
      }
      case S::kAbandoned: {
        id = propose_deadline_update(h);
        h.now += 73 * 3600;
        auto ctx = h.ctx();
        h.engine.sweep_idle(ctx);
        break;
      }
      default: throw std::logic_error("not an update state");
    }
    if (state == S::kDiscussionOpen) {
      // Only transient while the opening posts go out; restore to rest there.
      auto f = h.engine.flow(id);
      f.state = S::kDiscussionOpen;
      h.engine.restore(f);
    }
    return id;
  }
  id = answered_question(h);
  switch (state) {
    case S::kAsked: {
      auto f = h.engine.flow(id);
      f.state = S::kAsked;
      h.engine.restore(f);
      break;
    }
    case S::kAnswered: break;
    case S::kDiscussionOpen: {
      auto ctx = h.ctx();
      h.engine.escalate_question(ctx, id, "andy");
      break;
    }
    case S::kResolved: {
      auto ctx = h.ctx();
      h.engine.mark_helpful(ctx, id, "andy");
      break;
    }
    case S::kEscalatedToUpdate: {
      auto ctx = h.ctx();
      h.engine.escalate_question(ctx, id, "andy");
      auto ctx2 = h.ctx();
      h.engine.spawn_update_from_discussion(ctx2, id, "lee", {{"c", "lee", "1", "Bookings use the calendar."}});
      break;
    }
    default: throw std::logic_error("not a question state");
  }
  return id;
}

}  // namespace detail

// Applies every event to every state of both flow kinds, each on a fresh
// repository, and checks the observed transition against expected_table().
// Approve from AwaitingDecision runs twice: once clean, once after a manual
// commit makes the proposal stale.
inline DriveReport drive_state_machine() {
  using S = FlowState;
  using E = FlowEvent;
  const auto table = expected_table();
  DriveReport report;
  std::set<std::tuple<FlowKind, S, E, S>> covered;
  auto note = [&](const Outcome& out) {
    for (const auto& t : out.transitions) covered.insert({t.kind, t.from, t.event, t.to});
  };

  for (const auto kind : {FlowKind::kUpdate, FlowKind::kQuestion}) {
    for (const auto state : states_of(kind)) {
      for (const auto event : all_flow_events()) {
        for (const bool stale : {false, true}) {
          if (stale && event != E::kApprove) continue;
          ++report.pairs;
          std::ostringstream where;
          where << flow_kind_name(kind) << " " << flow_state_name(state) << " x " << flow_event_name(event)
                << (stale ? " (stale)" : "") << ": ";
          auto fail = [&](const std::string& what) { report.failures.push_back(where.str() + what); };

          Harness h;
          const auto id = detail::reach(h, kind, state);
          if (h.engine.flow(id).state != state) {
            fail("could not reach the state");
            continue;
          }
          if (stale) manual_commit(h.root(), "echolabs-policy.md", "# Echo Labs Policy\n\nRewritten by hand.\n", "hand");

          const auto it = table.find({kind, state, event});
          const std::set<S> allowed = it == table.end() ? std::set<S>{} : it->second;
          const auto flow = h.engine.flow(id);
          const auto member = flow.members.empty() ? std::string("lee") : flow.members.back();
          const auto conv = flow.discussion_id.value_or("c");
          std::optional<Outcome> out;
          std::optional<ErrorCode> error;
          bool internal = false;
          try {
            auto ctx = h.ctx();
            switch (event) {
              case E::kSelectMessages:
                out = h.engine.select_messages(
                    ctx, id, "adnan",
                    flow.offered_messages.empty() ? std::vector<SourceMessage>{{"lab", "", "x", ""}}
                                                  : std::vector<SourceMessage>{flow.offered_messages.back()});
                break;
              case E::kNextSuggestion: out = h.engine.next_suggestion(ctx, id, "adnan"); break;
              case E::kCreateNewDocument: out = h.engine.create_new_document(ctx, id, "adnan"); break;
              case E::kStartDiscussion: out = h.engine.start_discussion(ctx, id, "adnan"); break;
              case E::kInviteParticipant: out = h.engine.invite_participant(ctx, id, member, "andy-2"); break;
              case E::kApprove: out = h.engine.manager_decide(ctx, id, "lee", Decision::kApprove); break;
              case E::kReject: out = h.engine.manager_decide(ctx, id, "lee", Decision::kReject); break;
              case E::kRegenerate:
                out = h.engine.regenerate(ctx, id, member, {{conv, "lee", "5", "Also ask the co-authors first."}});
                break;
              case E::kExpire: {
                h.now = flow.updated_at + 73 * 3600;
                auto late = h.ctx();
                out = h.engine.sweep_idle(late);
                break;
              }
              case E::kHelpful: out = h.engine.mark_helpful(ctx, id, "andy"); break;
              case E::kNotHelpful: out = h.engine.escalate_question(ctx, id, "andy"); break;
              case E::kSpawnUpdate:
                out = h.engine.spawn_update_from_discussion(ctx, id, member, {{conv, "lee", "5", "Record this."}});
                break;
              case E::kContextPosted:
              case E::kAnswerPosted:
                // Raised inside start_discussion / handle_direct_question only.
                internal = true;
                break;
            }
          } catch (const Error& e) {
            error = e.code();
          }
          if (internal) continue;

          std::vector<TransitionRecord> mine;
          if (out) {
            note(*out);
            for (const auto& t : out->transitions) {
              if (t.flow_id == id) mine.push_back(t);
            }
          }
          const auto after = h.engine.flow(id).state;
          if (allowed.empty()) {
            // The sweeper skips flows for which Expire is not defined.
            if (event == E::kExpire) {
              if (!mine.empty()) fail("sweeper moved a flow without an Expire transition");
            } else if (error != std::optional<ErrorCode>(ErrorCode::kIllegalTransition)) {
              fail(error ? "expected IllegalTransition, got " + std::string(error_code_name(*error))
                         : "expected IllegalTransition, got success");
            }
            if (after != state) fail("state changed on a rejected event");
          } else {
            if (error) {
              fail("unexpected " + std::string(error_code_name(*error)));
            } else if (mine.empty()) {
              fail("no transition recorded");
            } else if (mine.front().from != state || mine.front().event != event ||
                       allowed.count(mine.front().to) == 0) {
              fail(std::string("recorded ") + std::string(flow_state_name(mine.front().from)) + " -> " +
                   std::string(flow_state_name(mine.front().to)));
            } else if (event == E::kApprove && mine.front().to != (stale ? S::kAwaitingDecision : S::kApplied)) {
              fail("approve ended in " + std::string(flow_state_name(mine.front().to)));
            }
          }
        }
      }
    }
  }

  // Internal events are observed from the operations that raise them.
  {
    Harness h;
    auto ctx = h.ctx();
    note(h.engine.handle_direct_question(ctx, "dm", "andy", "printer?"));
    const auto id = propose_deadline_update(h);
    auto ctx2 = h.ctx();
    note(h.engine.start_discussion(ctx2, id, "adnan"));
  }

  for (const auto& [key, targets] : table) {
    for (const auto target : targets) {
      ++report.specified;
      if (covered.count({std::get<0>(key), std::get<1>(key), std::get<2>(key), target}) != 0) {
        ++report.covered;
      } else {
        report.failures.push_back("transition never observed: " + std::string(flow_kind_name(std::get<0>(key))) +
                                  " " + std::string(flow_state_name(std::get<1>(key))) + " x " +
                                  std::string(flow_event_name(std::get<2>(key))) + " -> " +
                                  std::string(flow_state_name(target)));
      }
    }
  }
  // Anything observed outside the table is a failure too.
  for (const auto& [k, from, ev, to] : covered) {
    const auto it = table.find({k, from, ev});
    if (it == table.end() || it->second.count(to) == 0) {
      report.failures.push_back("unspecified transition observed: " + std::string(flow_state_name(from)) + " x " +
                                std::string(flow_event_name(ev)) + " -> " + std::string(flow_state_name(to)));
    }
  }
  return report;
}

}  // namespace choir::testing
