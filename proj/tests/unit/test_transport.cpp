#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "spikesplit/random.hpp"
#include "spikesplit/transport.hpp"

namespace spikesplit {
namespace {

Tensor random_images(const Shape3& in, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({n, in.c, in.h, in.w});
  for (auto& v : x.values()) v = rng.uniform();
  return x;
}

Tensor image_at(const Tensor& batch, std::size_t i) {
  return batch.slice0(i).reshaped({1, batch.dim(1), batch.dim(2), batch.dim(3)});
}

std::shared_ptr<Model> toy_model(std::size_t split, std::optional<Shape3> bottleneck) {
  const auto arch = build_arch("toy");
  auto model = std::make_shared<Model>(Model::build(arch, 5));
  if (bottleneck) model->insert_bottleneck(split, make_bottleneck(arch.split_shape(split), *bottleneck, 2), 6);
  model->calibrate_statistics(random_images(arch.input, 8, 7), 2);
  return model;
}

class Loopback : public ::testing::Test {
 protected:
  void SetUp() override {
    model_ = toy_model(1, Shape3{4, 4, 4});
    plain_ = toy_model(2, std::nullopt);
    server_.add_model(model_, 1);
    server_.start();
    ASSERT_NE(server_.port(), 0);
  }
  void TearDown() override { server_.stop(); }

  Endpoint endpoint() const { return {"127.0.0.1", server_.port()}; }

  std::shared_ptr<Model> model_;
  std::shared_ptr<Model> plain_;
  CloudServer server_;
};

TEST_F(Loopback, LogitsEqualMonolithicInference) {
  EdgeClient client(endpoint());
  const Tensor images = random_images(model_->arch().input, 6, 11);
  for (std::size_t i = 0; i < 6; ++i) {
    const Tensor img = image_at(images, i);
    const auto remote = edge_infer(client, *model_, 1, img, 2);
    EXPECT_EQ(remote, local_logits(*model_, img, 2)) << "image " << i;
    ASSERT_EQ(remote.size(), model_->arch().classes);
    // The in-process split path is bit-identical in double precision too.
    EXPECT_EQ(model_->run_cloud(model_->run_edge(img, 2, 1), 1), model_->infer(img, 2));
  }
}

TEST_F(Loopback, StatsAreAdditive) {
  EdgeClient client(endpoint());
  const Tensor images = random_images(model_->arch().input, 10, 12);
  SessionStats sum;
  for (std::size_t i = 0; i < 10; ++i) {
    const SessionStats before = client.stats();
    edge_infer(client, *model_, 1, image_at(images, i), 2);
    SessionStats delta;
    delta.frames_sent = client.stats().frames_sent - before.frames_sent;
    delta.payload_bytes_total = client.stats().payload_bytes_total - before.payload_bytes_total;
    delta.header_overhead_bytes = client.stats().header_overhead_bytes - before.header_overhead_bytes;
    delta.round_trips = client.stats().round_trips - before.round_trips;
    EXPECT_EQ(delta.frames_sent, 1u);
    EXPECT_EQ(delta.payload_bytes_total, 4u * 4 * 4 * 2 / 8);
    sum += delta;
  }
  EXPECT_EQ(client.stats(), sum);
  EXPECT_EQ(client.stats().frames_sent, 10u);
  EXPECT_EQ(client.stats().round_trips, 10u);
  EXPECT_EQ(client.stats().header_overhead_bytes, 10u * kFrameOverhead);
  EXPECT_EQ(server_.requests_served(), 10u);
}

TEST_F(Loopback, WrongDimsGiveShapeMismatch) {
  EdgeClient client(endpoint());
  SpikeTensor wrong(Shape5{2, 1, 5, 4, 4});
  const SpikeFrame reply = client.request(SpikeFrame::from_spikes(model_->arch().id, 1, wrong));
  ASSERT_EQ(reply.kind, FrameKind::error);
  EXPECT_EQ(reply.error_code(), ProtocolCode::shape_mismatch);
  // The server keeps serving the same connection.
  const Tensor img = random_images(model_->arch().input, 1, 14);
  EXPECT_EQ(edge_infer(client, *model_, 1, img, 2), local_logits(*model_, img, 2));
}

TEST_F(Loopback, UnknownModelIsAProtocolError) {
  EdgeClient client(endpoint());
  const Tensor img = random_images(plain_->arch().input, 1, 15);
  try {
    edge_infer(client, *plain_, 2, img, 2);
    FAIL() << "expected ProtocolError";
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.code(), ProtocolCode::unknown_model);
  }
}

TEST_F(Loopback, MalformedFrameKeepsConnectionOpen) {
  EdgeClient client(endpoint());
  const Tensor img = random_images(model_->arch().input, 1, 16);
  auto bytes = serialize(SpikeFrame::from_spikes(model_->arch().id, 1,
                                                 SpikeTensor::pack(model_->run_edge(img, 2, 1))));
  bytes[kHeaderBytes] ^= 0x01;
  const SpikeFrame reply = client.request_raw(bytes);
  ASSERT_EQ(reply.kind, FrameKind::error);
  EXPECT_EQ(reply.error_code(), ProtocolCode::malformed_frame);
  EXPECT_EQ(edge_infer(client, *model_, 1, img, 2), local_logits(*model_, img, 2));
  EXPECT_EQ(client.stats().round_trips, 2u);
}

TEST_F(Loopback, LogitsFrameIsUnexpected) {
  EdgeClient client(endpoint());
  const SpikeFrame reply = client.request(SpikeFrame::from_logits(model_->arch().id, 1, std::vector<float>{1, 2}));
  ASSERT_EQ(reply.kind, FrameKind::error);
  EXPECT_EQ(reply.error_code(), ProtocolCode::unexpected_frame);
}

TEST_F(Loopback, ConcurrentClientsGetTheirOwnAnswers) {
  const Tensor images = random_images(model_->arch().input, 8, 17);
  std::vector<std::vector<float>> expected;
  {
    EdgeClient single(endpoint());
    for (std::size_t i = 0; i < 8; ++i) expected.push_back(edge_infer(single, *model_, 1, image_at(images, i), 2));
  }
  auto worker = [&](std::size_t offset) {
    EdgeClient client(endpoint());
    std::vector<std::vector<float>> got;
    for (int round = 0; round < 5; ++round) {
      for (std::size_t k = 0; k < 4; ++k) got.push_back(edge_infer(client, *model_, 1, image_at(images, offset + k), 2));
    }
    return got;
  };
  auto a = std::async(std::launch::async, worker, 0);
  auto b = std::async(std::launch::async, worker, 4);
  const auto ra = a.get();
  const auto rb = b.get();
  for (std::size_t n = 0; n < ra.size(); ++n) {
    EXPECT_EQ(ra[n], expected[n % 4]);
    EXPECT_EQ(rb[n], expected[4 + n % 4]);
  }
}

TEST_F(Loopback, ConnectionLossIsRetryable) {
  EdgeClient client(endpoint());
  const Tensor img = random_images(model_->arch().input, 1, 18);
  edge_infer(client, *model_, 1, img, 2);
  server_.stop();
  EXPECT_THROW(edge_infer(client, *model_, 1, img, 2), RetryableError);
  EXPECT_THROW(edge_infer(client, *model_, 1, img, 2), RetryableError);
}

TEST(Transport, ResnetSplit4PayloadBytes) {
  const auto arch = build_arch("resnet50");
  auto model = std::make_shared<Model>(Model::build(arch, 1));
  model->insert_bottleneck(4, make_bottleneck(arch.split_shape(4), {32, 16, 16}, 2), 2);
  model->calibrate_statistics(random_images(arch.input, 2, 3), 2);
  CloudServer server;
  server.add_model(model, 4);
  server.start();
  EdgeClient client({"127.0.0.1", server.port()});
  const Tensor img = random_images(arch.input, 1, 4);
  EXPECT_EQ(edge_infer(client, *model, 4, img, 2), local_logits(*model, img, 2));
  EXPECT_EQ(client.stats().payload_bytes_total, 2048u);
  server.stop();
}

TEST(Transport, RefusedConnectionIsRetryable) {
  std::uint16_t port = 0;
  {
    CloudServer probe;
    probe.start();
    port = probe.port();
    probe.stop();
  }
  EdgeClient client({"127.0.0.1", port});
  EXPECT_THROW(client.request(SpikeFrame::from_logits(1, 1, std::vector<float>{0})), RetryableError);
}

TEST(Transport, EndpointParsing) {
  const auto e = Endpoint::parse("10.0.0.2:9000");
  EXPECT_EQ(e.host, "10.0.0.2");
  EXPECT_EQ(e.port, 9000);
  EXPECT_EQ(e.to_string(), "10.0.0.2:9000");
  EXPECT_ANY_THROW(Endpoint::parse("nohost"));
  EXPECT_ANY_THROW(Endpoint::parse("host:99999"));
  EXPECT_ANY_THROW(Endpoint::parse("host:abc"));
}

}  // namespace
}  // namespace spikesplit
