#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "tweetcluster/common.hpp"

namespace tweetcluster::corpus {

struct Tweet {
  std::string id;
  std::string channel;
  std::int64_t timestamp = 0;  // epoch seconds, UTC
  std::string raw_text;
  std::string clean_text;
  std::vector<std::string> tokens;
  bool empty_after_clean = false;
};

struct ChannelStats {
  std::string channel;
  std::size_t tweet_count = 0;
  std::size_t word_count = 0;
  std::size_t unique_word_count = 0;
  double mean_word_count = 0.0;
};

struct CorpusStats {
  std::vector<ChannelStats> rows;  // sorted by channel name
};

struct IngestResult {
  std::vector<Tweet> tweets;
  std::size_t skipped_bad_timestamp = 0;
  std::size_t skipped_malformed = 0;
  std::size_t empty_after_clean = 0;
};

namespace detail {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// URL shortener hosts that appear bare (no scheme) in tweet text.
inline const std::array<std::string_view, 20>& shortener_hosts() {
  static const std::array<std::string_view, 20> hosts = {
      "t.co",    "bit.ly",  "bbc.in",  "goo.gl",  "tinyurl.com", "ow.ly",  "dlvr.it",
      "trib.al", "nyti.ms", "n.pr",    "reut.rs", "lat.ms",      "wapo.st", "huff.to",
      "fb.me",   "ift.tt",  "is.gd",   "buff.ly", "cnn.it",      "usat.ly"};
  return hosts;
}

inline bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

// Deletes every maximal non-whitespace run that starts with a URL scheme, and
// every whitespace-delimited token that starts with a known shortener host
// followed by a path.
inline std::string remove_urls(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_space(s[i])) {
      out.push_back(s[i++]);
      continue;
    }
    std::size_t end = i;
    while (end < s.size() && !is_space(s[end])) ++end;
    const std::string_view token(s.data() + i, end - i);

    // Scheme anywhere inside the token: drop from the scheme to token end.
    std::size_t scheme = std::string_view::npos;
    for (std::size_t k = 0; k + 7 <= token.size(); ++k) {
      if (iequals_prefix(token.substr(k), "http://") || iequals_prefix(token.substr(k), "https://")) {
        scheme = k;
        break;
      }
    }
    if (scheme != std::string_view::npos) {
      out.append(token.substr(0, scheme));
      i = end;
      continue;
    }

    bool bare_shortener = false;
    for (const auto host : shortener_hosts()) {
      if (token.size() > host.size() + 1 && iequals_prefix(token, host) &&
          token[host.size()] == '/') {
        bare_shortener = true;
        break;
      }
    }
    if (!bare_shortener) out.append(token);
    i = end;
  }
  return out;
}

inline std::string remove_leading_rt(const std::string& s) {
  std::size_t i = 0;
  while (i < s.size() && is_space(s[i])) ++i;
  if (i + 2 <= s.size() && s[i] == 'R' && s[i + 1] == 'T' &&
      (i + 2 == s.size() || is_space(s[i + 2]))) {
    return s.substr(std::min(i + 3, s.size()));
  }
  return s;
}

inline std::string remove_mentions(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_space(s[i])) {
      out.push_back(s[i++]);
      continue;
    }
    std::size_t end = i;
    while (end < s.size() && !is_space(s[end])) ++end;
    if (s[i] != '@') out.append(s, i, end - i);
    i = end;
  }
  return out;
}

inline std::string collapse_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : s) {
    if (is_space(c)) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

inline constexpr std::string_view kEdgePunct = ".,!?;:\"'()[]";

}  // namespace detail

// Removal passes in order: URLs, leading retweet marker, @-mentions, '#'
// signs. Iterated to a fixed point so that stripping one artifact cannot
// uncover another (e.g. "#@user"), which keeps clean idempotent.
inline std::string clean(const std::string& raw) {
  std::string s = raw;
  for (int pass = 0; pass < 16; ++pass) {
    std::string before = s;
    s = detail::remove_urls(s);
    s = detail::remove_leading_rt(s);
    s = detail::remove_mentions(s);
    std::erase(s, '#');
    if (s == before) break;
  }
  return detail::collapse_whitespace(s);
}

// Lowercased whitespace split with edge punctuation stripped. Tokens that end
// up empty, or that still carry '@' / '#' / "http" residue, are dropped.
inline std::vector<std::string> tokenize(const std::string& clean_text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < clean_text.size()) {
    while (i < clean_text.size() && detail::is_space(clean_text[i])) ++i;
    std::size_t end = i;
    while (end < clean_text.size() && !detail::is_space(clean_text[end])) ++end;
    if (end > i) {
      std::string tok = clean_text.substr(i, end - i);
      for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      std::size_t lo = 0, hi = tok.size();
      while (lo < hi && detail::kEdgePunct.find(tok[lo]) != std::string_view::npos) ++lo;
      while (hi > lo && detail::kEdgePunct.find(tok[hi - 1]) != std::string_view::npos) --hi;
      tok = tok.substr(lo, hi - lo);
      const bool residue = tok.find('@') != std::string::npos ||
                           tok.find('#') != std::string::npos ||
                           tok.find("http") != std::string::npos;
      if (!tok.empty() && !residue) tokens.push_back(std::move(tok));
    }
    i = end;
  }
  return tokens;
}

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::optional<int> month_from_name(std::string_view m) {
  static constexpr std::array<std::string_view, 12> names = {
      "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  for (int i = 0; i < 12; ++i) {
    if (m == names[static_cast<std::size_t>(i)]) return i + 1;
  }
  return std::nullopt;
}

// Accepts the Twitter export format "Thu Apr 09 01:31:50 +0000 2015" and
// ISO-style "2015-04-09 01:31:50" / "2015-04-09T01:31:50Z".
inline std::optional<std::int64_t> parse_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string a, b, c, d, e, f;
  if (in >> a >> b >> c >> d >> e >> f) {
    const auto month = month_from_name(b);
    if (month && a.size() == 3 && d.size() == 8 && (e[0] == '+' || e[0] == '-') &&
        e.size() == 5 && f.size() == 4) {
      try {
        const int day = std::stoi(c);
        const int hh = std::stoi(d.substr(0, 2));
        const int mm = std::stoi(d.substr(3, 2));
        const int ss = std::stoi(d.substr(6, 2));
        const int year = std::stoi(f);
        const int off_h = std::stoi(e.substr(1, 2));
        const int off_m = std::stoi(e.substr(3, 2));
        if (d[2] != ':' || d[5] != ':') return std::nullopt;
        if (day < 1 || day > 31 || hh > 23 || mm > 59 || ss > 60) return std::nullopt;
        std::int64_t t = days_from_civil(year, *month, day) * 86400 + hh * 3600 + mm * 60 + ss;
        const std::int64_t off = (off_h * 3600 + off_m * 60) * (e[0] == '+' ? 1 : -1);
        return t - off;
      } catch (const std::exception&) {
        return std::nullopt;
      }
    }
  }
  // ISO fallback
  int year, mon, day, hh, mm, ss;
  char sep;
  if (std::sscanf(text.c_str(), "%d-%d-%d%c%d:%d:%d", &year, &mon, &day, &sep, &hh, &mm, &ss) == 7 &&
      (sep == ' ' || sep == 'T') && mon >= 1 && mon <= 12 && day >= 1 && day <= 31) {
    return days_from_civil(year, mon, day) * 86400 + hh * 3600 + mm * 60 + ss;
  }
  return std::nullopt;
}

inline std::string format_timestamp(std::int64_t t) {
  std::int64_t days = t / 86400;
  std::int64_t rem = t % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  // civil_from_days (inverse of days_from_civil)
  std::int64_t z = days + 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                static_cast<long long>(y + (m <= 2)), m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

}  // namespace detail

// One record per line: id <delim> timestamp <delim> text. The text field may
// itself contain the delimiter, so only the first two separators split.
inline IngestResult ingest_file(const std::filesystem::path& path, char delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  const std::string channel = path.stem().string();
  IngestResult result;
  std::string line;
  bool first_line = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first_line && line.size() >= 3 && line[0] == '\xEF' && line[1] == '\xBB' && line[2] == '\xBF') {
      line.erase(0, 3);
    }
    first_line = false;
    if (line.empty()) continue;
    const std::size_t p1 = line.find(delimiter);
    const std::size_t p2 = p1 == std::string::npos ? std::string::npos : line.find(delimiter, p1 + 1);
    if (p2 == std::string::npos) {
      ++result.skipped_malformed;
      continue;
    }
    const auto ts = detail::parse_timestamp(line.substr(p1 + 1, p2 - p1 - 1));
    if (!ts) {
      ++result.skipped_bad_timestamp;
      continue;
    }
    Tweet tweet;
    tweet.id = line.substr(0, p1);
    tweet.channel = channel;
    tweet.timestamp = *ts;
    tweet.raw_text = line.substr(p2 + 1);
    tweet.clean_text = clean(tweet.raw_text);
    tweet.tokens = tokenize(tweet.clean_text);
    tweet.empty_after_clean = tweet.tokens.empty();
    if (tweet.empty_after_clean) ++result.empty_after_clean;
    result.tweets.push_back(std::move(tweet));
  }
  return result;
}

// Ingests every regular file in a directory, one channel per file, in
// lexicographic filename order.
inline IngestResult ingest(const std::filesystem::path& path, char delimiter) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw IoError("no such path: " + path.string());
  if (fs::is_regular_file(path)) return ingest_file(path, delimiter);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no corpus files in directory: " + path.string());
  IngestResult result;
  for (const auto& file : files) {
    IngestResult part = ingest_file(file, delimiter);
    result.skipped_bad_timestamp += part.skipped_bad_timestamp;
    result.skipped_malformed += part.skipped_malformed;
    result.empty_after_clean += part.empty_after_clean;
    std::move(part.tweets.begin(), part.tweets.end(), std::back_inserter(result.tweets));
  }
  return result;
}

inline CorpusStats stats(const std::vector<Tweet>& tweets) {
  if (tweets.empty()) throw InvalidInput("stats: empty corpus");
  struct Acc {
    std::size_t tweets = 0;
    std::size_t words = 0;
    std::unordered_set<std::string> unique;
  };
  std::map<std::string, Acc> by_channel;
  for (const auto& t : tweets) {
    Acc& acc = by_channel[t.channel];
    ++acc.tweets;
    acc.words += t.tokens.size();
    for (const auto& tok : t.tokens) acc.unique.insert(tok);
  }
  CorpusStats out;
  for (const auto& [channel, acc] : by_channel) {
    ChannelStats row;
    row.channel = channel;
    row.tweet_count = acc.tweets;
    row.word_count = acc.words;
    row.unique_word_count = acc.unique.size();
    row.mean_word_count = static_cast<double>(acc.words) / static_cast<double>(acc.tweets);
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline nlohmann::json to_json(const Tweet& t) {
  nlohmann::json j{{"id", t.id},
                   {"channel", t.channel},
                   {"timestamp", detail::format_timestamp(t.timestamp)},
                   {"raw_text", t.raw_text},
                   {"clean_text", t.clean_text},
                   {"tokens", t.tokens}};
  if (t.empty_after_clean) j["empty_after_clean"] = true;
  return j;
}

inline Tweet tweet_from_json(const nlohmann::json& j) {
  Tweet t;
  t.id = j.at("id").get<std::string>();
  t.channel = j.at("channel").get<std::string>();
  const auto ts = detail::parse_timestamp(j.at("timestamp").get<std::string>());
  t.timestamp = ts ? *ts : 0;
  t.raw_text = j.at("raw_text").get<std::string>();
  t.clean_text = j.at("clean_text").get<std::string>();
  t.tokens = j.at("tokens").get<std::vector<std::string>>();
  t.empty_after_clean = j.value("empty_after_clean", false);
  return t;
}

inline void write_jsonl(const std::vector<Tweet>& tweets, const std::filesystem::path& path) {
  atomic_write_file(path, [&](std::ostream& os) {
    for (const auto& t : tweets) os << to_json(t).dump() << '\n';
  });
}

inline std::vector<Tweet> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path.string());
  std::vector<Tweet> tweets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      tweets.push_back(tweet_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
  }
  return tweets;
}

inline void write_stats_csv(const CorpusStats& stats, const std::filesystem::path& path) {
  atomic_write_file(path, [&](std::ostream& os) {
    os << "channel,tweets,words,unique_words,mean_words\n";
    for (const auto& row : stats.rows) {
      char mean[32];
      std::snprintf(mean, sizeof mean, "%.4f", row.mean_word_count);
      std::string channel = row.channel;
      if (channel.find(',') != std::string::npos || channel.find('"') != std::string::npos) {
        std::string quoted = "\"";
        for (char c : channel) {
          if (c == '"') quoted += '"';
          quoted += c;
        }
        channel = quoted + "\"";
      }
      os << channel << ',' << row.tweet_count << ',' << row.word_count << ','
         << row.unique_word_count << ',' << mean << '\n';
    }
  });
}

}  // namespace tweetcluster::corpus
