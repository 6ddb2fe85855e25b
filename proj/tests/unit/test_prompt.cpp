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

#include "fixtures.hpp"
#include "promptseg/prompt.hpp"

using namespace promptseg;

namespace
{

Prompt point(Voxel c, int r, Polarity pol = Polarity::positive)
{
  return Prompt{PointPrompt{c, r}, pol};
}

}  // namespace

TEST(Rasterize, UnitBallHasSevenVoxels)
{
  const BinaryMask m = rasterize_prompt(point({5, 5, 5}, 1), Geometry::with_shape({11, 11, 11}));
  // oracle: enumerate integer offsets with squared norm <= 1
  std::size_t expected = 0;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        expected += dz * dz + dy * dy + dx * dx <= 1;
      }
    }
  }
  EXPECT_EQ(expected, 7U);
  EXPECT_EQ(count_foreground(m), expected);
}

TEST(Rasterize, BallCountsMatchEnumeration)
{
  for (int r = 1; r <= 5; ++r) {
    std::size_t expected = 0;
    for (int dz = -r; dz <= r; ++dz) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          expected += dz * dz + dy * dy + dx * dx <= r * r;
        }
      }
    }
    EXPECT_EQ(count_foreground(rasterize_prompt(point({8, 8, 8}, r), Geometry::with_shape({17, 17, 17}))), expected);
  }
}

TEST(Rasterize, BoxIsUpperExclusiveOnOneSlice)
{
  const Prompt box{BoxPrompt{3, {2, 2}, {5, 5}}, Polarity::positive};
  const BinaryMask m = rasterize_prompt(box, Geometry::with_shape({6, 8, 8}));
  EXPECT_EQ(count_foreground(m), 9U);
  for (int y = 2; y < 5; ++y) {
    for (int x = 2; x < 5; ++x) {
      EXPECT_EQ(m.at(3, y, x), 1);
    }
  }
  EXPECT_EQ(m.at(3, 5, 5), 0);
}

TEST(Rasterize, LassoSquareFillsTheSquare)
{
  const Prompt lasso{LassoPrompt{1, {{2, 3}, {2, 9}, {7, 9}, {7, 3}}}, Polarity::positive};
  const BinaryMask m = rasterize_prompt(lasso, Geometry::with_shape({3, 12, 12}));
  BinaryMask expected(m.geometry);
  for (int y = 2; y <= 7; ++y) {
    for (int x = 3; x <= 9; ++x) {
      expected.at(1, y, x) = 1;
    }
  }
  EXPECT_EQ(m.data, expected.data);
}

TEST(Rasterize, ScribbleFollowsLineAndThickness)
{
  const Prompt s1{ScribblePrompt{0, {{1, 1}, {1, 6}}, 1}, Polarity::positive};
  const BinaryMask m1 = rasterize_prompt(s1, Geometry::with_shape({1, 10, 10}));
  EXPECT_EQ(count_foreground(m1), 6U);
  Prompt s2 = s1;
  std::get<ScribblePrompt>(s2.shape).thickness = 2;
  const BinaryMask m2 = rasterize_prompt(s2, Geometry::with_shape({1, 10, 10}));
  EXPECT_GT(count_foreground(m2), count_foreground(m1));
  for (std::size_t i = 0; i < m1.data.size(); ++i) {
    if (m1.data[i]) {
      EXPECT_EQ(m2.data[i], 1);
    }
  }
}

TEST(LinePixels, EndpointsIncludedAndConnected)
{
  const auto px = line_pixels({0, 0}, {3, 7});
  EXPECT_EQ(px.front(), (Pixel{0, 0}));
  EXPECT_EQ(px.back(), (Pixel{3, 7}));
  for (std::size_t i = 1; i < px.size(); ++i) {
    EXPECT_LE(std::abs(px[i].y - px[i - 1].y), 1);
    EXPECT_LE(std::abs(px[i].x - px[i - 1].x), 1);
  }
}

TEST(Polygon, SimplicityAndArea)
{
  const std::vector<Pixel> square{{0, 0}, {0, 4}, {4, 4}, {4, 0}};
  const std::vector<Pixel> bowtie{{0, 0}, {4, 4}, {0, 4}, {4, 0}};
  EXPECT_TRUE(is_simple_polygon(square));
  EXPECT_FALSE(is_simple_polygon(bowtie));
  EXPECT_EQ(std::abs(polygon_area2(square)), 32);
}

TEST(Validate, RejectsOutOfBoundsAndBadShapes)
{
  const Shape3 s{8, 8, 8};
  EXPECT_NO_THROW(validate_prompt(point({7, 7, 7}, 1), s));
  EXPECT_THROW(validate_prompt(point({8, 0, 0}, 1), s), InvalidArgument);
  EXPECT_THROW(validate_prompt(point({1, 1, 1}, 0), s), InvalidArgument);
  EXPECT_THROW(validate_prompt(point({1, 1, 1}, 6), s), InvalidArgument);
  EXPECT_THROW(validate_prompt(Prompt{BoxPrompt{1, {3, 3}, {3, 5}}, Polarity::positive}, s), InvalidArgument);
  EXPECT_THROW(validate_prompt(Prompt{BoxPrompt{1, {0, 0}, {9, 5}}, Polarity::positive}, s), InvalidArgument);
  EXPECT_THROW(validate_prompt(Prompt{LassoPrompt{1, {{0, 0}, {4, 4}, {0, 4}, {4, 0}}}, Polarity::positive}, s),
               InvalidArgument);
  EXPECT_THROW(validate_prompt(Prompt{ScribblePrompt{1, {{1, 1}, {1, 1}}, 1}, Polarity::positive}, s), InvalidArgument);
  EXPECT_THROW(validate_prompt(Prompt{ScribblePrompt{1, {{1, 1}, {1, 2}}, 3}, Polarity::positive}, s), InvalidArgument);
}

TEST(PromptJson, RoundTripsEveryKind)
{
  const std::vector<Prompt> prompts{
      point({1, 2, 3}, 2, Polarity::negative),
      Prompt{BoxPrompt{4, {1, 2}, {5, 6}}, Polarity::positive},
      Prompt{LassoPrompt{2, {{1, 1}, {1, 5}, {5, 5}, {5, 1}}}, Polarity::positive},
      Prompt{ScribblePrompt{3, {{1, 1}, {2, 4}, {6, 6}}, 2}, Polarity::negative},
  };
  for (const auto & p : prompts) {
    EXPECT_EQ(prompt_from_json(to_json(p)), p);
  }
}

TEST(PromptJson, StrictSchema)
{
  using nlohmann::json;
  EXPECT_THROW(prompt_from_json(json{{"kind", "star"}, {"polarity", "positive"}}), InvalidArgument);
  EXPECT_THROW(prompt_from_json(json{{"kind", "point"}, {"polarity", "positive"}, {"center", {1, 2, 3}}}), InvalidArgument);
  EXPECT_THROW(prompt_from_json(json{{"kind", "point"},
                                     {"polarity", "positive"},
                                     {"center", {1, 2, 3}},
                                     {"radius", 1},
                                     {"slice", 2}}),
               InvalidArgument);
  EXPECT_THROW(prompt_from_json(json{{"kind", "point"}, {"polarity", "maybe"}, {"center", {1, 2, 3}}, {"radius", 1}}),
               InvalidArgument);
  EXPECT_THROW(prompt_from_json(json::array()), InvalidArgument);
  EXPECT_NO_THROW(prompt_from_json(json{{"kind", "point"}, {"polarity", "positive"}, {"center", {1, 2, 3}}, {"radius", 1}}));
}
