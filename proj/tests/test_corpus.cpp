#include <filesystem>
#include <fstream>
#include <random>

#include "catch_amalgamated.hpp"
#include "tweetcluster/corpus.hpp"

using namespace tweetcluster;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir() {
  static std::atomic<int> counter{0};
  const fs::path dir =
      fs::temp_directory_path() / ("tc_corpus_" + std::to_string(::getpid()) + "_" +
                                   std::to_string(counter.fetch_add(1)));
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  os << content;
}

}  // namespace

TEST_CASE("clean strips hashtag signs but keeps the tag body") {
  CHECK(corpus::clean("#pregnancy update") == "pregnancy update");
}

TEST_CASE("clean removes retweet marker, mentions and urls") {
  CHECK(corpus::clean("RT @nytimes Suicide risk falls after talk therapy http://t.co/x1") ==
        "Suicide risk falls after talk therapy");
  CHECK(corpus::clean("") == "");
  CHECK(corpus::clean("Breast cancer risk test devised http://bbc.in/1CimpJF") ==
        "Breast cancer risk test devised");
  // bare shortener without a scheme
  CHECK(corpus::clean("Sleep study t.co/abc123 released") == "Sleep study released");
  // RT only removed as a prefix token
  CHECK(corpus::clean("the RT question") == "the RT question");
  CHECK(corpus::clean("RTworking out") == "RTworking out");
  // mentions removed anywhere
  CHECK(corpus::clean("new data from @cdc today") == "new data from today");
}

TEST_CASE("clean is idempotent") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> pieces = {
      "flu",     "#flu",  "@user",  "RT",      "http://x.io/a", "https://b.co/q?z=1",
      "t.co/9k", "risk:", "shot,",  "#@mixed", "RT@user",       "vaccine",
      "",        " ",     "study."};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const int n = static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      s += pieces[pick(rng)];
      s += rng() % 3 == 0 ? "" : " ";
    }
    const std::string once = corpus::clean(s);
    CHECK(corpus::clean(once) == once);
    CHECK(once.find('#') == std::string::npos);
  }
}

TEST_CASE("tokenize lowercases and strips edge punctuation") {
  CHECK(corpus::tokenize("Breast cancer risk test devised") ==
        std::vector<std::string>{"breast", "cancer", "risk", "test", "devised"});
  CHECK(corpus::tokenize("Stress, depression boost risks.") ==
        std::vector<std::string>{"stress", "depression", "boost", "risks"});
  CHECK(corpus::tokenize("\"Quoted!\" (aside) ... plain") ==
        std::vector<std::string>{"quoted", "aside", "plain"});
  CHECK(corpus::tokenize("").empty());
  CHECK(corpus::tokenize("27-word tweet") == std::vector<std::string>{"27-word", "tweet"});
}

TEST_CASE("no token carries mention, hashtag or url residue") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> pieces = {"a@b.com", "#tag",   "@who", "httpd",
                                           "see http://x.y/z", "well", "RT"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    for (std::size_t i = 0; i < 1 + rng() % 6; ++i) {
      s += pieces[pick(rng)];
      s += " ";
    }
    for (const auto& tok : corpus::tokenize(corpus::clean(s))) {
      CAPTURE(s, tok);
      CHECK(tok.find('#') == std::string::npos);
      CHECK(tok.find('@') == std::string::npos);
      CHECK(tok.find("http") == std::string::npos);
    }
  }
}

TEST_CASE("ingest parses the pipe-delimited record format") {
  const fs::path dir = make_temp_dir();
  write_file(dir / "BBC Health.txt",
             "585978391360221184|Thu Apr 09 01:31:50 +0000 2015|Breast cancer risk test devised "
             "http://bbc.in/1CimpJF\n");
  const auto result = corpus::ingest_file(dir / "BBC Health.txt", '|');
  REQUIRE(result.tweets.size() == 1);
  const auto& t = result.tweets[0];
  CHECK(t.id == "585978391360221184");
  CHECK(t.channel == "BBC Health");
  CHECK(t.clean_text == "Breast cancer risk test devised");
  CHECK(t.tokens == std::vector<std::string>{"breast", "cancer", "risk", "test", "devised"});
  CHECK(corpus::detail::format_timestamp(t.timestamp) == "2015-04-09T01:31:50Z");
  fs::remove_all(dir);
}

TEST_CASE("ingest edge cases") {
  const fs::path dir = make_temp_dir();

  SECTION("empty file gives empty list") {
    write_file(dir / "empty.txt", "");
    CHECK(corpus::ingest_file(dir / "empty.txt", '|').tweets.empty());
  }

  SECTION("unreadable path raises") {
    CHECK_THROWS_AS(corpus::ingest(dir / "missing", '|'), IoError);
  }

  SECTION("bad timestamp is skipped and counted") {
    write_file(dir / "c.txt", "1|not a time|hello world\n2|Thu Apr 09 01:31:50 +0000 2015|ok\n");
    const auto result = corpus::ingest_file(dir / "c.txt", '|');
    CHECK(result.tweets.size() == 1);
    CHECK(result.skipped_bad_timestamp == 1);
  }

  SECTION("text containing the delimiter is rejoined") {
    write_file(dir / "c.txt", "1|Thu Apr 09 01:31:50 +0000 2015|a|b|c\n");
    const auto result = corpus::ingest_file(dir / "c.txt", '|');
    REQUIRE(result.tweets.size() == 1);
    CHECK(result.tweets[0].raw_text == "a|b|c");
  }

  SECTION("line with too few fields is counted as malformed") {
    write_file(dir / "c.txt", "1|only timestamp\n");
    const auto result = corpus::ingest_file(dir / "c.txt", '|');
    CHECK(result.tweets.empty());
    CHECK(result.skipped_malformed == 1);
  }

  SECTION("tweet that cleans to nothing is kept and flagged") {
    write_file(dir / "c.txt", "1|Thu Apr 09 01:31:50 +0000 2015|RT @user http://t.co/gone\n");
    const auto result = corpus::ingest_file(dir / "c.txt", '|');
    REQUIRE(result.tweets.size() == 1);
    CHECK(result.tweets[0].tokens.empty());
    CHECK(result.tweets[0].empty_after_clean);
    CHECK(result.empty_after_clean == 1);
  }

  fs::remove_all(dir);
}

TEST_CASE("stats aggregates per channel") {
  std::vector<corpus::Tweet> tweets(4);
  tweets[0].channel = "a";
  tweets[0].tokens = {"x", "y", "z", "x"};
  tweets[1].channel = "a";
  tweets[1].tokens = {"x", "q", "r", "s", "t", "u"};
  tweets[2].channel = "b";
  tweets[2].tokens = {"hello"};
  tweets[3].channel = "b";
  tweets[3].tokens = {};

  const auto s = corpus::stats(tweets);
  REQUIRE(s.rows.size() == 2);
  CHECK(s.rows[0].channel == "a");
  CHECK(s.rows[0].tweet_count == 2);
  CHECK(s.rows[0].word_count == 10);
  CHECK(s.rows[0].unique_word_count == 8);
  CHECK(s.rows[0].mean_word_count == Catch::Approx(5.0));
  CHECK(s.rows[1].tweet_count == 2);

  std::size_t total = 0;
  for (const auto& row : s.rows) total += row.tweet_count;
  CHECK(total == tweets.size());

  CHECK_THROWS_AS(corpus::stats({}), InvalidInput);
}

TEST_CASE("jsonl round trip") {
  const fs::path dir = make_temp_dir();
  std::vector<corpus::Tweet> tweets(2);
  tweets[0].id = "1";
  tweets[0].channel = "c";
  tweets[0].timestamp = 1428543110;
  tweets[0].raw_text = "Raw #one http://t.co/x";
  tweets[0].clean_text = corpus::clean(tweets[0].raw_text);
  tweets[0].tokens = corpus::tokenize(tweets[0].clean_text);
  tweets[1].id = "2";
  tweets[1].channel = "c";
  tweets[1].timestamp = 0;
  tweets[1].raw_text = "";
  tweets[1].empty_after_clean = true;

  corpus::write_jsonl(tweets, dir / "corpus.jsonl");
  const auto back = corpus::read_jsonl(dir / "corpus.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == tweets[0].id);
  CHECK(back[0].timestamp == tweets[0].timestamp);
  CHECK(back[0].tokens == tweets[0].tokens);
  CHECK(back[1].empty_after_clean);
  fs::remove_all(dir);
}
