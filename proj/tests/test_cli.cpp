#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "alscd/io.hpp"

using namespace alscd;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ALSCD_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const std::string dir = (fs::temp_directory_path() / "alscd_cli").string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  EXPECT_EQ(run("config"), 0);
  EXPECT_EQ(run("--config " + dir + "/missing.cfg config"), 3);
  write_file(dir + "/bad.cfg", "[synth]\nextent_x=0\n");
  EXPECT_EQ(run("--config " + dir + "/bad.cfg config"), 2);
  EXPECT_EQ(run("--precision 16 config"), 2);
  EXPECT_EQ(run("rasterize " + dir + "/none.las --out " + dir + "/r"), 3);
  write_file(dir + "/small.cfg", "[synth]\nextent_x=48\nextent_y=48\nn_buildings=4\nmax_side=12\nmax_building_area=150\n");
  EXPECT_EQ(run("--config " + dir + "/small.cfg --seed 3 synth --out " + dir + "/s"), 0);
  EXPECT_TRUE(fs::exists(dir + "/s/t2.las"));
  EXPECT_EQ(run("--config " + dir + "/small.cfg rasterize " + dir + "/s/t1.las --grid-from " + dir +
                "/s/truth_t1.asc --out " + dir + "/e1"),
            0);
  EXPECT_EQ(run("--config " + dir + "/small.cfg rasterize " + dir + "/s/t2.las --out " + dir + "/e2"), 0);
  // e2 uses the cloud's own bounds, so its grid differs from e1
  EXPECT_EQ(run("detect " + dir + "/e1 " + dir + "/e2 --mask1 " + dir + "/s/truth_t1.asc --mask2 " + dir +
                "/s/truth_t2.asc --out " + dir + "/d"),
            4);
  EXPECT_EQ(run("--config " + dir + "/small.cfg rasterize " + dir + "/s/t2.las --grid-from " + dir +
                "/s/truth_t1.asc --out " + dir + "/e2"),
            0);
  EXPECT_EQ(run("detect " + dir + "/e1 " + dir + "/e2 --mask1 " + dir + "/s/truth_t1.asc --mask2 " + dir +
                "/s/truth_t2.asc --out " + dir + "/d"),
            0);
  EXPECT_TRUE(fs::exists(dir + "/d/overlay.png"));
  EXPECT_EQ(run("evaluate " + dir + "/d " + dir + "/s"), 0);
  fs::remove_all(dir);
}
