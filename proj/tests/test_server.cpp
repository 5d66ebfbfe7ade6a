#include <gtest/gtest.h>

#include <thread>

#include "pagenet/annotation_server.hpp"
#include "test_support.hpp"

using namespace pagenet;
using nlohmann::json;

namespace {

// Three images; the first is annotated.
class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    write_image(dir_ / "a.png", Image(40, 60, 3));
    write_image(dir_ / "b.pgm", Image(30, 20, 1));
    write_image(dir_ / "c.ppm", Image(10, 10, 3));
    save_annotations(dir_ / "ann.tsv", {AnnotationRecord{"a.png", 60, 40, frame_quad(60, 40), "first"}});
  }

  void start(AnnotationServerOptions extra = {}) {
    extra.annotations = dir_ / "ann.tsv";
    extra.images_dir = dir_.path();
    server_ = std::make_unique<AnnotationServer>(extra);
    ASSERT_TRUE(server_->bind("127.0.0.1", 0));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", server_->port());
  }

  void TearDown() override {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Result put(int index, const json& body) {
    return client_->Put("/api/annotations/" + std::to_string(index), body.dump(), "application/json");
  }

  testing_support::TempDir dir_{"server"};
  std::unique_ptr<AnnotationServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
};

}  // namespace

TEST_F(ServerTest, ListsImagesWithStatus) {
  start();
  const auto res = client_->Get("/api/images");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto list = json::parse(res->body)["images"];
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[0]["image_path"], "a.png");
  EXPECT_EQ(list[0]["status"], "annotated");
  EXPECT_EQ(list[1]["image_path"], "b.pgm");
  EXPECT_EQ(list[1]["status"], "unannotated");
  EXPECT_EQ(list[1]["width"], 20);
  EXPECT_EQ(list[1]["height"], 30);
  EXPECT_EQ(list[2]["status"], "unannotated");
}

TEST_F(ServerTest, ServesImageBytes) {
  start();
  const auto res = client_->Get("/api/images/1/file");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, read_file(dir_ / "b.pgm"));
  EXPECT_EQ(client_->Get("/api/images/9/file")->status, 404);
}

TEST_F(ServerTest, PutThenGetRoundTrips) {
  start();
  const json body = {{"corners", {{15, 25}, {2, 3}, {18, 4}, {1, 27}}}, {"annotator_id", "second"}};
  const auto res = put(1, body);
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  const auto got = client_->Get("/api/annotations/1");
  ASSERT_EQ(got->status, 200);
  const auto j = json::parse(got->body);
  const auto rec = record_from_json(j);
  EXPECT_EQ(rec, (AnnotationRecord{"b.pgm", 20, 30,
                                   canonicalize(std::array<Point, 4>{Point{15, 25}, Point{2, 3}, Point{18, 4},
                                                                     Point{1, 27}}),
                                   "second"}));
  EXPECT_EQ(j["revision"], 1);
  // Persisted to disk, other records untouched.
  const auto on_disk = load_annotations(dir_ / "ann.tsv");
  ASSERT_EQ(on_disk.size(), 2u);
  EXPECT_EQ(on_disk[0].image_path, "a.png");
  EXPECT_EQ(on_disk[1], rec);
  EXPECT_EQ(json::parse(client_->Get("/api/images")->body)["images"][1]["status"], "annotated");
}

TEST_F(ServerTest, PersistedRecordsSurviveRestart) {
  start();
  ASSERT_EQ(put(2, {{"corners", {{0, 0}, {10, 0}, {10, 10}, {0, 10}}}})->status, 200);
  TearDown();
  server_.reset();
  start();
  const auto j = json::parse(client_->Get("/api/annotations/2")->body);
  EXPECT_EQ(record_from_json(j).quad, frame_quad(10, 10));
}

TEST_F(ServerTest, MalformedRecordsRejected) {
  start();
  const auto three = put(1, {{"corners", {{0, 0}, {10, 0}, {10, 10}}}});
  EXPECT_EQ(three->status, 400);
  EXPECT_NE(three->body.find("expected 4 corners"), std::string::npos);
  EXPECT_EQ(put(1, {{"corners", {{0, 0}, {10, 0}, {0, 10}, {2, 2}}}})->status, 400);
  EXPECT_EQ(client_->Put("/api/annotations/1", "{not json", "application/json")->status, 400);
  EXPECT_EQ(put(1, {{"corners", {{0, 0}, {1, 0}, {1, 1}, {0, 1}}}, {"image_path", "a.png"}})->status, 422);
  EXPECT_EQ(put(1, {{"corners", {{0, 0}, {1, 0}, {1, 1}, {0, 1}}}, {"width", 99}})->status, 422);
  EXPECT_EQ(put(7, {{"corners", {{0, 0}, {1, 0}, {1, 1}, {0, 1}}}})->status, 404);
  EXPECT_EQ(client_->Get("/api/annotations/1")->status, 404);
  EXPECT_EQ(load_annotations(dir_ / "ann.tsv").size(), 1u);
}

TEST_F(ServerTest, StaleRevisionFlaggedButLastWriterWins) {
  start();
  const json first = {{"corners", {{0, 0}, {20, 0}, {20, 30}, {0, 30}}}, {"base_revision", 0}};
  const auto r1 = put(1, first);
  EXPECT_FALSE(r1->has_header("Warning"));
  const json second = {{"corners", {{1, 1}, {19, 1}, {19, 29}, {1, 29}}}, {"base_revision", 0}};
  const auto r2 = put(1, second);
  ASSERT_EQ(r2->status, 200);
  EXPECT_TRUE(r2->has_header("Warning"));
  EXPECT_EQ(json::parse(r2->body)["revision"], 2);
  EXPECT_EQ(record_from_json(json::parse(client_->Get("/api/annotations/1")->body)).quad[0], (Point{1, 1}));
}

TEST_F(ServerTest, ConcurrentPutsAllPersist) {
  start();
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", server_->port());
      const double d = t * 0.5;
      const json body = {{"corners", {{d, d}, {10 - d / 2, 0}, {10, 10}, {0, 10}}}};
      if (auto r = c.Put("/api/annotations/" + std::to_string(t % 3), body.dump(), "application/json");
          r && r->status == 200) {
        ++ok;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(ok, 8);
  const auto list = json::parse(client_->Get("/api/images")->body)["images"];
  int revisions = 0;
  for (const auto& e : list) revisions += e["revision"].get<int>();
  EXPECT_EQ(revisions, 8);
  EXPECT_EQ(load_annotations(dir_ / "ann.tsv").size(), 3u);
}

TEST_F(ServerTest, Predictions) {
  MeanQuadModel mq;
  mq.corners = {Point{0.25, 0.25}, Point{0.75, 0.25}, Point{0.75, 0.75}, Point{0.25, 0.75}};
  save_mean_quad(dir_ / "mq.txt", mq);
  nn::save_model(dir_ / "m.bin", nn::FcnModel::zeros(2));
  AnnotationServerOptions opts;
  opts.mean_quad = dir_ / "mq.txt";
  opts.model = dir_ / "m.bin";
  opts.input_size = 16;
  start(opts);

  const auto full = json::parse(client_->Get("/api/predictions/0?system=full-image")->body);
  EXPECT_EQ(full["corners"], quad_to_json(frame_quad(60, 40)));
  EXPECT_EQ(full["iou"], 1.0);
  const auto mean = json::parse(client_->Get("/api/predictions/0?system=mean-quad")->body);
  EXPECT_EQ(mean["corners"][0], json::array({15.0, 10.0}));
  EXPECT_DOUBLE_EQ(mean["iou"].get<double>(), 0.25);
  const auto model = client_->Get("/api/predictions/1?system=model");
  ASSERT_EQ(model->status, 200) << model->body;
  EXPECT_FALSE(json::parse(model->body).contains("iou"));
  EXPECT_EQ(client_->Get("/api/predictions/0?system=oracle")->status, 400);
}

TEST_F(ServerTest, MissingModelsAreNotFound) {
  start();
  EXPECT_EQ(client_->Get("/api/predictions/0?system=model")->status, 404);
  EXPECT_EQ(client_->Get("/api/predictions/0?system=mean-quad")->status, 404);
  EXPECT_EQ(client_->Get("/")->status, 200);
}

TEST_F(ServerTest, BindFailsWhenPortTaken) {
  start();
  AnnotationServerOptions opts;
  opts.annotations = dir_ / "ann.tsv";
  opts.images_dir = dir_.path();
  AnnotationServer other(opts);
  EXPECT_FALSE(other.bind("127.0.0.1", server_->port()));
}
