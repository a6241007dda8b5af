#include "drn/cli.hpp"

int main(int argc, char** argv)
{
    return drn::cli_main(argc, argv);
}
