pub mod opcheck;
