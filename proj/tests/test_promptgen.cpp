#include "helpers.hpp"

#include "radalign/http_llm_client.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>
#include <thread>

using namespace radalign;

namespace {

PromptBundle sample_bundle(int n_cases = 2) {
    PromptBundle b;
    b.template_id = "report_v1";
    b.predictions = {{0, "AT", "Atelectasis", 0.12345},
                     {1, "CM", "Cardiomegaly", 0.91},
                     {2, "CD", "Consolidation", 0.5}};
    b.findings = {{0, "Heart Size", 1, "enlarged cardiac silhouette", 1.25},
                  {1, "Lung Opacity", 0, "lungs are clear without focal opacity", 0.75}};
    for (int i = 0; i < n_cases; ++i)
        b.retrieved.push_back({10.0 - i, "Historical report body " + std::to_string(i)});
    return b;
}

PromptTemplate default_template() {
    return load_template(testutil::template_dir() / "report_v1.txt");
}

}  // namespace

TEST_CASE("render_prompt lays out the three sections deterministically") {
    auto tmpl = default_template();
    auto bundle = sample_bundle();
    std::ostringstream log;
    std::string prompt = render_prompt(bundle, tmpl, {}, log);

    // Sections in order.
    auto d = prompt.find("=== DIAGNOSIS ===");
    auto f = prompt.find("=== FINDINGS ===");
    auto c = prompt.find("=== SIMILAR CASES ===");
    REQUIRE(d != std::string::npos);
    REQUIRE(f != std::string::npos);
    REQUIRE(c != std::string::npos);
    CHECK(d < f);
    CHECK(f < c);

    // Fixed three-decimal score formatting.
    CHECK(prompt.find("AT (Atelectasis): 0.123") != std::string::npos);
    CHECK(prompt.find("CM (Cardiomegaly): 0.910") != std::string::npos);
    CHECK(prompt.find("CD (Consolidation): 0.500") != std::string::npos);

    // Findings verbatim, in criterion order.
    auto f0 = prompt.find("Heart Size: enlarged cardiac silhouette");
    auto f1 = prompt.find("Lung Opacity: lungs are clear without focal opacity");
    REQUIRE(f0 != std::string::npos);
    REQUIRE(f1 != std::string::npos);
    CHECK(f0 < f1);

    // Cases in rank order with their scores.
    auto c0 = prompt.find("Case 1 (score 10.000):\nHistorical report body 0");
    auto c1 = prompt.find("Case 2 (score 9.000):\nHistorical report body 1");
    REQUIRE(c0 != std::string::npos);
    REQUIRE(c1 != std::string::npos);
    CHECK(c0 < c1);

    // The editorial instruction survives templating.
    CHECK(prompt.find("Do not re-diagnose") != std::string::npos);
    CHECK(log.str().empty());

    CHECK(render_prompt(bundle, tmpl) == prompt);  // byte-identical
}

TEST_CASE("render_prompt announces an empty retrieval list") {
    auto prompt = render_prompt(sample_bundle(0), default_template());
    CHECK(prompt.find("none available") != std::string::npos);
    CHECK(prompt.find("Case 1") == std::string::npos);
}

TEST_CASE("a bundle with seven retrievals renders exactly seven case blocks") {
    auto prompt = render_prompt(sample_bundle(7), default_template());
    int count = 0;
    size_t pos = 0;
    while ((pos = prompt.find("Case ", pos)) != std::string::npos) {
        ++count;
        pos += 5;
    }
    CHECK(count == 7);
    CHECK(prompt.find("Case 7 (score 4.000)") != std::string::npos);
}

TEST_CASE("over-long findings are truncated and logged, never silently") {
    auto bundle = sample_bundle();
    bundle.findings[0].text = std::string(300, 'x');
    RenderOptions opts;
    opts.max_finding_len = 100;
    std::ostringstream log;
    auto prompt = render_prompt(bundle, default_template(), opts, log);
    CHECK(prompt.find(std::string(100, 'x')) != std::string::npos);
    CHECK(prompt.find(std::string(101, 'x')) == std::string::npos);
    CHECK(log.str().find("truncated") != std::string::npos);
    CHECK(log.str().find("Heart Size") != std::string::npos);

    // Under the default limit nothing is lost.
    std::ostringstream log2;
    auto full = render_prompt(bundle, default_template(), {}, log2);
    CHECK(full.find(bundle.findings[0].text) != std::string::npos);
    CHECK(log2.str().empty());
}

TEST_CASE("templates must carry all placeholders") {
    testutil::TempDir tmp("promptgen");
    io::atomic_write(tmp / "broken.txt",
                     [](std::ostream& os) { os << "{diagnosis} {findings} only"; });
    CHECK_THROWS_AS(load_template(tmp / "broken.txt"), FormatError);
    CHECK(default_template().id == "report_v1");
}

TEST_CASE("generate_report with the echo mock is deterministic end to end") {
    auto bundle = sample_bundle();
    auto tmpl = default_template();
    EchoLLMClient echo;
    GenerateOptions opts;
    opts.backoff_base_ms = 0;
    auto a = generate_report(bundle, tmpl, echo, opts);
    auto b = generate_report(bundle, tmpl, echo, opts);
    CHECK(a.text == b.text);
    CHECK(a.prompt == b.prompt);
    CHECK(a.text == a.prompt);
    CHECK(a.client_name == "echo-mock");
    CHECK(a.template_id == "report_v1");
    CHECK(a.retries == 0);
    for (const auto& f : bundle.findings)
        CHECK(a.text.find(f.text) != std::string::npos);
}

TEST_CASE("generate_report retries transport failures with a capped budget") {
    auto bundle = sample_bundle();
    auto tmpl = default_template();
    GenerateOptions opts;
    opts.backoff_base_ms = 0;

    ScriptedLLMClient flaky({"recovered completion"}, /*fail_first=*/2);
    auto draft = generate_report(bundle, tmpl, flaky, opts);
    CHECK(draft.text == "recovered completion");
    CHECK(draft.retries == 2);
    CHECK(flaky.calls() == 3);

    ScriptedLLMClient dead({"unreachable"}, /*fail_first=*/10);
    opts.max_retries = 3;
    CHECK_THROWS_AS(generate_report(bundle, tmpl, dead, opts), TransportError);
    CHECK(dead.calls() == 4);  // first try + 3 retries
}

TEST_CASE("an empty completion is an error") {
    auto bundle = sample_bundle();
    auto tmpl = default_template();
    ScriptedLLMClient empty({""});
    GenerateOptions opts;
    opts.backoff_base_ms = 0;
    CHECK_THROWS_AS(generate_report(bundle, tmpl, empty, opts), Error);
}

TEST_CASE("generate_reports preserves input order under a concurrency cap") {
    auto tmpl = default_template();
    std::vector<PromptBundle> bundles;
    for (int i = 0; i < 9; ++i) {
        auto b = sample_bundle(0);
        b.predictions[0].score = i * 0.1;
        bundles.push_back(b);
    }
    FunctionLLMClient client([](const std::string& prompt) {
        return "len:" + std::to_string(prompt.size());
    });
    GenerateOptions opts;
    opts.backoff_base_ms = 0;
    auto drafts = generate_reports(bundles, tmpl, client, opts, 3);
    REQUIRE(drafts.size() == 9);
    for (size_t i = 0; i < 9; ++i) {
        auto expected = "len:" + std::to_string(render_prompt(bundles[i], tmpl).size());
        CHECK(drafts[i].text == expected);
    }
}

TEST_CASE("the HTTP client replays a recorded completion from a stub server") {
    // Completion recorded from an OpenAI-compatible endpoint, frozen here.
    const std::string recorded =
        "FINDINGS: The cardiac silhouette is enlarged. The lungs are clear.\n"
        "IMPRESSION: Cardiomegaly without acute airspace disease.";

    httplib::Server server;
    std::string seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        nlohmann::json reply;
        reply["choices"] = nlohmann::json::array(
            {{{"message", {{"role", "assistant"}, {"content", recorded}}}}});
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpLLMClient::Config cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.api_key = "test-key";
    cfg.model = "stub-model";
    HttpLLMClient client(cfg);

    auto draft = generate_report(sample_bundle(), default_template(), client, {});
    CHECK(draft.text == recorded);
    CHECK(draft.client_name == "http:stub-model");

    auto body = nlohmann::json::parse(seen_body);
    CHECK(body["model"] == "stub-model");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"].get<std::string>().find("DIAGNOSIS") !=
          std::string::npos);

    server.stop();
    server_thread.join();
}

TEST_CASE("the HTTP client maps failures to transport errors") {
    HttpLLMClient::Config cfg;
    cfg.endpoint = "http://127.0.0.1:9/v1/chat/completions";  // discard port, nothing listens
    cfg.timeout_seconds = 1;
    HttpLLMClient client(cfg);
    CHECK_THROWS_AS(client.generate("hello", {}), TransportError);
}
