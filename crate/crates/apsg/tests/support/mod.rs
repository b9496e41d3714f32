pub mod methodgen;
