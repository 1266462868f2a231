#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "echosonar/error.hpp"
#include "echosonar/pipeline.hpp"

namespace echosonar {

std::pair<std::size_t, std::size_t> SessionPart::index_range(std::size_t n) const {
  const auto at = [n](double fraction) {
    return static_cast<std::size_t>(std::floor(std::clamp(fraction, 0.0, 1.0) * static_cast<double>(n) + 1e-9));
  };
  return {at(begin), at(end)};
}

namespace {

std::map<std::string, std::vector<const SessionManifest*>> sessions_by_user(std::span<const SessionManifest> sessions) {
  std::set<std::string> ids;
  std::map<std::string, std::vector<const SessionManifest*>> users;
  for (const SessionManifest& s : sessions) {
    if (!ids.insert(s.session_id).second) throw SplitError("duplicate session id '" + s.session_id + "'");
    users[s.user_id].push_back(&s);
  }
  for (auto& [user, list] : users) {
    std::stable_sort(list.begin(), list.end(),
                     [](const SessionManifest* a, const SessionManifest* b) { return a->session_index < b->session_index; });
  }
  return users;
}

}  // namespace

SplitResult split(std::span<const SessionManifest> sessions, const SplitSpec& spec) {
  if (sessions.empty()) throw SplitError("no sessions to split");
  const auto users = sessions_by_user(sessions);
  SplitResult result;

  switch (spec.protocol) {
    case Protocol::within_session: {
      if (!spec.holdout.empty()) throw SplitError("within_session does not take holdout ids");
      for (const auto& [user, list] : users) {
        const std::size_t n = list.size();
        const std::size_t split_from = n >= 2 ? n - 2 : 0;
        for (std::size_t i = 0; i < n; ++i) {
          if (i < split_from) {
            result.train.push_back({list[i]->session_id, 0.0, 1.0});
          } else {
            result.train.push_back({list[i]->session_id, 0.0, 0.5});
            result.test.push_back({list[i]->session_id, 0.5, 1.0});
          }
        }
      }
      break;
    }
    case Protocol::cross_session: {
      std::set<std::string> held(spec.holdout.begin(), spec.holdout.end());
      for (const std::string& id : held) {
        const bool known = std::any_of(sessions.begin(), sessions.end(),
                                       [&](const SessionManifest& s) { return s.session_id == id; });
        if (!known) throw SplitError("unknown holdout session '" + id + "'");
      }
      for (const auto& [user, list] : users) {
        if (held.empty() && list.size() < 2)
          throw SplitError("user '" + user + "' has a single session; cross_session needs at least two");
        for (std::size_t i = 0; i < list.size(); ++i) {
          const bool test = held.empty() ? i + 1 == list.size() : held.count(list[i]->session_id) > 0;
          (test ? result.test : result.train).push_back({list[i]->session_id, 0.0, 1.0});
        }
      }
      break;
    }
    case Protocol::cross_user: {
      if (spec.holdout.empty()) throw SplitError("cross_user needs at least one holdout user");
      std::set<std::string> held(spec.holdout.begin(), spec.holdout.end());
      for (const std::string& id : held) {
        if (!users.count(id)) throw SplitError("unknown holdout user '" + id + "'");
      }
      for (const auto& [user, list] : users) {
        for (const SessionManifest* s : list) {
          (held.count(user) ? result.test : result.train).push_back({s->session_id, 0.0, 1.0});
        }
      }
      break;
    }
  }
  if (result.train.empty()) throw SplitError("split leaves no training sessions");
  if (result.test.empty()) throw SplitError("split leaves no test sessions");
  return result;
}

}  // namespace echosonar
