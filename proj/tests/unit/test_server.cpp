// Copyright 2026 The promptseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <httplib.h>

#include "fixtures.hpp"
#include "promptseg/rle.hpp"
#include "promptseg/server.hpp"

using namespace promptseg;

namespace
{

std::shared_ptr<const Predictor> small_model()
{
  NetworkConfig c = NetworkConfig::toy();
  c.widths = {4, 8, 8};
  Rng rng(2);
  return std::make_shared<NetworkPredictor>(std::make_shared<const ResidualUNet<float>>(build_network(c, rng)),
                                            GuidanceConfig{}, 16);
}

class ServerTest : public ::testing::Test
{
protected:
  void SetUp() override
  {
    ServerConfig cfg;
    cfg.port = 0;
    cfg.max_sessions = 2;
    server_ = std::make_unique<SegmentationServer>(small_model(), cfg);
    server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", server_->port());
  }
  void TearDown() override { server_->stop(); }

  std::string upload_body() const
  {
    ImageVolume img = fixtures::random_image({16, 16, 16}, 7, 0.5, 1.5);
    return encode_volume(img, true);
  }

  std::string create()
  {
    auto r = client_->Post("/v1/sessions", upload_body(), "application/octet-stream");
    EXPECT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    return nlohmann::json::parse(r->body).at("session_id");
  }

  std::unique_ptr<SegmentationServer> server_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(ServerTest, HealthAndRouteTable)
{
  auto r = client_->Get("/v1/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(nlohmann::json::parse(r->body)["status"], "ok");
  EXPECT_NE(SegmentationServer::endpoint_table().find("/v1/sessions"), std::string::npos);
}

TEST_F(ServerTest, FullSessionLifecycle)
{
  const std::string id = create();
  const std::string base = "/v1/sessions/" + id;
  auto info = client_->Get(base.c_str());
  ASSERT_TRUE(info);
  EXPECT_EQ(nlohmann::json::parse(info->body)["rounds"], 0);
  EXPECT_EQ(client_->Get((base + "/mask").c_str())->status, 409);
  EXPECT_EQ(client_->Post((base + "/undo").c_str(), "", "application/json")->status, 409);

  const nlohmann::json p1 = {{"kind", "point"}, {"polarity", "positive"}, {"center", {8, 8, 8}}, {"radius", 2}};
  auto r1 = client_->Post((base + "/prompts").c_str(), p1.dump(), "application/json");
  ASSERT_TRUE(r1);
  ASSERT_EQ(r1->status, 200) << r1->body;
  const auto j1 = nlohmann::json::parse(r1->body);
  EXPECT_EQ(j1["round"], 1);
  EXPECT_EQ(j1["mask_version"], 1);

  auto mask = client_->Get((base + "/mask").c_str());
  ASSERT_EQ(mask->status, 200);
  const auto mj = nlohmann::json::parse(mask->body);
  const BinaryMask decoded = decode_rle(rle_from_json(mj));
  EXPECT_EQ(decoded.shape(), (Shape3{16, 16, 16}));
  EXPECT_EQ(client_->Get((base + "/mask?slice=3").c_str())->status, 200);
  EXPECT_EQ(client_->Get((base + "/mask?slice=99").c_str())->status, 404);

  auto png = client_->Get((base + "/slice/5").c_str());
  ASSERT_EQ(png->status, 200);
  EXPECT_EQ(png->body.substr(1, 3), "PNG");
  EXPECT_EQ(client_->Get((base + "/slice/99").c_str())->status, 404);
  EXPECT_EQ(client_->Get((base + "/slice/2?window=3,1").c_str())->status, 400);

  const nlohmann::json batch = nlohmann::json::array(
      {{{"kind", "box"}, {"polarity", "positive"}, {"slice", 8}, {"min", {2, 2}}, {"max", {12, 12}}},
       {{"kind", "scribble"}, {"polarity", "negative"}, {"slice", 3}, {"vertices", {{1, 1}, {6, 9}}}, {"thickness", 1}}});
  auto r2 = client_->Post((base + "/prompts").c_str(), batch.dump(), "application/json");
  ASSERT_EQ(r2->status, 200) << r2->body;
  EXPECT_EQ(nlohmann::json::parse(r2->body)["round"], 2);

  auto tr = client_->Get((base + "/transcript").c_str());
  EXPECT_EQ(nlohmann::json::parse(tr->body)["prompts"].size(), 3U);

  auto undo = client_->Post((base + "/undo").c_str(), "", "application/json");
  ASSERT_EQ(undo->status, 200);
  EXPECT_EQ(nlohmann::json::parse(undo->body)["round"], 1);
  auto mask_after = client_->Get((base + "/mask").c_str());
  EXPECT_EQ(nlohmann::json::parse(mask_after->body)["runs"], mj["runs"]);

  auto exp = client_->Get((base + "/export").c_str());
  ASSERT_EQ(exp->status, 200);
  const BinaryMask exported =
      decode_mask(std::span(reinterpret_cast<const std::uint8_t *>(exp->body.data()), exp->body.size()));
  EXPECT_EQ(exported.data, decoded.data);

  EXPECT_EQ(client_->Delete(base.c_str())->status, 204);
  EXPECT_EQ(client_->Get(base.c_str())->status, 404);
}

TEST_F(ServerTest, BadInputsGiveClientErrors)
{
  EXPECT_EQ(client_->Post("/v1/sessions", "not a volume", "application/octet-stream")->status, 400);
  const std::string id = create();
  const std::string path = "/v1/sessions/" + id + "/prompts";
  EXPECT_EQ(client_->Post(path.c_str(), "{", "application/json")->status, 422);
  const nlohmann::json outside = {{"kind", "point"}, {"polarity", "positive"}, {"center", {40, 8, 8}}, {"radius", 2}};
  EXPECT_EQ(client_->Post(path.c_str(), outside.dump(), "application/json")->status, 422);
  const nlohmann::json unknown = {{"kind", "circle"}, {"polarity", "positive"}};
  EXPECT_EQ(client_->Post(path.c_str(), unknown.dump(), "application/json")->status, 422);
  EXPECT_EQ(client_->Get("/v1/sessions/nope")->status, 404);
  auto info = client_->Get(("/v1/sessions/" + id).c_str());
  EXPECT_EQ(nlohmann::json::parse(info->body)["rounds"], 0);
}

TEST_F(ServerTest, EvictsLeastRecentlyUsed)
{
  const std::string a = create();
  const std::string b = create();
  client_->Get(("/v1/sessions/" + a).c_str());
  const std::string c = create();
  EXPECT_EQ(server_->session_count(), 2U);
  EXPECT_EQ(client_->Get(("/v1/sessions/" + b).c_str())->status, 404);
  EXPECT_EQ(client_->Get(("/v1/sessions/" + a).c_str())->status, 200);
  EXPECT_EQ(client_->Get(("/v1/sessions/" + c).c_str())->status, 200);
}

TEST(ServerBind, OccupiedPortIsAnError)
{
  ServerConfig cfg;
  cfg.port = 0;
  SegmentationServer first(small_model(), cfg);
  first.start();
  cfg.port = first.port();
  SegmentationServer second(small_model(), cfg);
  EXPECT_THROW(second.bind(), IoError);
  first.stop();
}
